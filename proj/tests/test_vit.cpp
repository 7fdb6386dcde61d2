#include "doctest.h"

#include <cmath>
#include <limits>

#include "approxabft/vit.hpp"

using namespace approxabft;

namespace {

const Model& default_model() {
  static const Model model = build_model({});
  return model;
}

Matrix sample_input(std::uint64_t seed) { return generate_dataset(default_model(), 1, seed).inputs.front(); }

}  // namespace

TEST_CASE("graph has the expected nodes and shapes") {
  const Model& m = default_model();
  REQUIRE(m.nodes().size() == 21);
  CHECK(m.nodes().front().id == "layer0.attn.q");
  CHECK(m.nodes().back().id == "classifier");
  const GemmNode& qk = m.nodes()[m.node_index("layer0.attn.h0.qk")];
  CHECK(qk.shape == GemmShape{16, 16, 16});
  CHECK(qk.kind == GemmKind::attn_score);
  CHECK(m.nodes()[m.node_index("layer1.ff1")].shape == GemmShape{16, 32, 128});
  CHECK(m.nodes()[m.node_index("layer1.ff2")].shape == GemmShape{16, 128, 32});
  CHECK(m.nodes()[m.node_index("classifier")].shape == GemmShape{1, 32, 10});
  CHECK_THROWS_AS(m.node_index("nope"), std::out_of_range);
}

TEST_CASE("config validation") {
  ModelConfig bad;
  bad.num_heads = 3;
  CHECK_THROWS_AS(build_model(bad), std::invalid_argument);
  bad = {};
  bad.num_layers = 0;
  CHECK_THROWS_AS(build_model(bad), std::invalid_argument);
}

TEST_CASE("weights are a function of the seed") {
  const Model a = build_model({});
  const Model b = build_model({});
  ModelConfig other;
  other.weight_seed = 7;
  const Model c = build_model(other);
  CHECK(a.layers()[1].w_ff2.bit_equal(b.layers()[1].w_ff2));
  CHECK_FALSE(a.layers()[1].w_ff2.bit_equal(c.layers()[1].w_ff2));
  for (float v : a.layers()[0].wq.data()) CHECK(std::abs(v) <= 1.0f / std::sqrt(32.0f));
}

TEST_CASE("clean forward is deterministic and counts the workload") {
  const Model& m = default_model();
  const Matrix x = sample_input(3);
  OpCounter c1, c2;
  const ForwardResult r1 = forward(m, x, {}, c1);
  const ForwardResult r2 = forward(m, x, {}, c2);
  REQUIRE(r1.logits.size() == 10);
  CHECK(r1.logits == r2.logits);
  std::uint64_t macs = 0, adds = 0;
  for (const GemmNode& n : m.nodes()) {
    macs += n.shape.macs();
    adds += static_cast<std::uint64_t>(n.shape.m) * n.shape.n * (n.shape.k - 1);
  }
  CHECK(c1.workload_mults == macs);
  CHECK(c1.workload_adds == adds);
  CHECK(c1.abft_mults == 0);
}

TEST_CASE("input shape is checked") {
  OpCounter c;
  CHECK_THROWS_AS(forward(default_model(), Matrix(4, 4), {}, c), ShapeError);
}

TEST_CASE("zero ber under every strategy matches the clean logits") {
  const Model& m = default_model();
  const Matrix x = sample_input(11);
  OpCounter clean_counter;
  const ForwardResult clean = forward(m, x, {}, clean_counter);
  FaultConfig faults;
  faults.ber = 0.0;
  faults.seed = 1;
  for (const char* name : {"baseline", "v1", "v2", "opt", "opt-average"}) {
    ForwardOptions opt;
    opt.faults = &faults;
    opt.strategy = parse_strategy(name);
    OpCounter c;
    const ForwardResult r = forward(m, x, opt, c);
    CHECK(r.logits == clean.logits);
    for (const GemmReport& rep : r.reports) {
      CHECK(rep.protected_run);
      CHECK_FALSE(rep.detection.triggered);
    }
    CHECK(c.workload_mults == clean_counter.workload_mults);
  }
}

TEST_CASE("a forced fault is repaired by the baseline") {
  const Model& m = default_model();
  const Matrix x = sample_input(5);
  OpCounter cc;
  const ForwardResult clean = forward(m, x, {}, cc);

  FaultConfig faults;
  faults.seed = 1;
  faults.forced.push_back({"layer0.ff1", 3, 40, 50.0f});

  ForwardOptions unprotected;
  unprotected.faults = &faults;
  OpCounter cu;
  CHECK(forward(m, x, unprotected, cu).logits != clean.logits);

  ForwardOptions opt = unprotected;
  opt.strategy = AbftStrategy::baseline();
  OpCounter cp;
  const ForwardResult r = forward(m, x, opt, cp);
  const GemmReport& rep = r.reports[m.node_index("layer0.ff1")];
  CHECK(rep.detection.triggered);
  CHECK(rep.correction.exact_corrected == 1);
  REQUIRE(r.logits.size() == clean.logits.size());
  for (std::size_t i = 0; i < r.logits.size(); ++i) CHECK(r.logits[i] == doctest::Approx(clean.logits[i]).epsilon(1e-4));
}

TEST_CASE("observation reports raw deviations and ground truth") {
  const Model& m = default_model();
  const Matrix x = sample_input(9);
  FaultConfig faults;
  faults.seed = 2;
  faults.forced.push_back({"layer1.attn.o", 2, 5, 10.0f});
  faults.forced.push_back({"layer1.attn.o", 2, 9, 20.0f});
  ForwardOptions opt;
  opt.faults = &faults;
  opt.observe = true;
  OpCounter c;
  const ForwardResult r = forward(m, x, opt, c);
  const Observation& o = *r.reports[m.node_index("layer1.attn.o")].observation;
  CHECK(o.msd == doctest::Approx(30.0).epsilon(1e-3));
  CHECK(o.abs_rcsd.size() == 16 + 32);
  CHECK(o.flagged_rows == 1);
  CHECK(o.flagged_cols == 2);
  CHECK(o.flips == 0);
  CHECK(c.abft_mults == 0);
  const Observation& q = *r.reports[m.node_index("layer0.attn.q")].observation;
  CHECK(q.flagged_rows == 0);
  CHECK(q.flagged_cols == 0);
}

TEST_CASE("observation counts rows holding several flipped cells") {
  const Model& m = default_model();
  const Matrix x = sample_input(9);
  FaultConfig faults;
  faults.seed = 4;
  faults.ber = 1e-3;
  faults.scope = {"layer0.ff2"};
  ForwardOptions opt;
  opt.faults = &faults;
  opt.observe = true;
  OpCounter c;
  const ForwardResult r = forward(m, x, opt, c);
  const Observation& o = *r.reports[m.node_index("layer0.ff2")].observation;
  CHECK(o.flips > 0);
  CHECK(o.multi_rows <= o.flagged_rows);
  CHECK(o.multi_cols <= o.flagged_cols);
  CHECK(r.reports[m.node_index("layer0.ff1")].observation->flips == 0);
}

TEST_CASE("argmax ties and NaN") {
  CHECK(argmax({1.0f, 3.0f, 3.0f}) == 1);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  CHECK(argmax({nan, 1.0f, 2.0f}) == 2);
  CHECK(argmax({1.0f, nan, 0.5f}) == 0);
}

TEST_CASE("dataset labels are the clean predictions") {
  const Model& m = default_model();
  const Dataset a = generate_dataset(m, 8, 42);
  const Dataset b = generate_dataset(m, 8, 42);
  REQUIRE(a.inputs.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(a.inputs[i].bit_equal(b.inputs[i]));
    CHECK(a.labels[i] == b.labels[i]);
    CHECK(a.labels[i] < 10);
  }
  const AccuracyResult clean = evaluate_accuracy(m, a, nullptr, std::nullopt, nullptr);
  CHECK(clean.accuracy == 1.0);
}

TEST_CASE("abft multiplications follow the analytic model") {
  const Model& m = default_model();
  const Dataset ds = generate_dataset(m, 4, 1);
  FaultConfig faults;
  faults.seed = 3;
  faults.ber = 1e-6;
  const AccuracyResult r = evaluate_accuracy(m, ds, &faults, AbftStrategy::baseline(), nullptr);
  CHECK(r.counter.abft_mults == predicted_abft_mults(m, r.node_triggers, 4));
  std::uint64_t triggers = 0;
  for (auto t : r.node_triggers) triggers += t;
  CHECK(triggers == r.detections_triggered);
}
