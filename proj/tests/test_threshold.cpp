#include "doctest.h"

#include <cmath>

#include "approxabft/threshold.hpp"

using namespace approxabft;

TEST_CASE("alpha_to_threshold formula") {
  CHECK(alpha_to_threshold(0.0, 100.0, 0.25) == 25.0);
  CHECK(alpha_to_threshold(3.0, 100.0, 0.0) == 3.0);
  CHECK(alpha_to_threshold(0.0, 100.0, 0.0) == fp_floor(0.0));
  CHECK(alpha_to_threshold(1e-9, 1e-8, 0.5) == fp_floor(0.0));
  CHECK(alpha_to_threshold(0.5, 3e38, 1.0) == 3e38);
  CHECK_THROWS_AS(alpha_to_threshold(0.0, 1.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(alpha_to_threshold(0.0, 1.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(alpha_to_threshold(2.0, 1.0, 0.5), std::invalid_argument);

  double prev = 0.0;
  for (int i = 0; i <= 64; ++i) {
    const double t = alpha_to_threshold(0.3, 7.0, i / 64.0);
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("binary search against a synthetic oracle") {
  int calls = 0;
  const auto r = binary_search_alpha(
      [&](double a) {
        ++calls;
        return a <= 0.5;
      },
      1.0 / 64.0);
  CHECK(r.alpha == doctest::Approx(0.5).epsilon(1.0 / 64.0));
  CHECK(r.alpha <= 0.5);
  CHECK(r.alpha + 1.0 / 64.0 > 0.5);
  CHECK_FALSE(r.infeasible);
  CHECK(calls == 6);
  CHECK(r.evaluated.size() == 6);
}

TEST_CASE("binary search returns a feasible alpha whose successor is infeasible") {
  for (double cut : {0.0, 0.013, 0.2, 0.37, 0.81, 0.99}) {
    const auto feasible = [cut](double a) { return a <= cut; };
    const auto r = binary_search_alpha(feasible, 1.0 / 64.0);
    CHECK(feasible(r.alpha));
    CHECK_FALSE(feasible(r.alpha + 1.0 / 64.0));
    CHECK(r.evaluated.size() <= 7);
  }
}

TEST_CASE("infeasible even at zero is flagged") {
  const auto r = binary_search_alpha([](double) { return false; }, 1.0 / 64.0);
  CHECK(r.alpha == 0.0);
  CHECK(r.infeasible);
  CHECK(r.evaluated.back() == 0.0);
  const auto ok = binary_search_alpha([](double a) { return a == 0.0; }, 1.0 / 64.0);
  CHECK(ok.alpha == 0.0);
  CHECK_FALSE(ok.infeasible);
}

TEST_CASE("a budget covering everything yields alpha 1") {
  int calls = 0;
  const AccuracyFn acc = [&](const AlphaAssignment&) {
    ++calls;
    return 0.0;
  };
  const auto r = global_alpha_search({"g"}, acc, 1.0, 1.0, 1.0 / 64.0);
  CHECK(r.alpha == 1.0);
  CHECK(calls == 0);
  const AlphaAssignment g = greedy_alpha_search({"a", "b"}, acc, 1.0, 1.0 / 64.0);
  CHECK(g.alphas.at("a").detect == 1.0);
  CHECK(g.alphas.at("b").localize == 1.0);
}

namespace {

// Accuracy falls once any GEMM's alpha exceeds its own tolerance.
AccuracyFn tolerance_oracle(std::map<std::string, double> tolerance) {
  return [tolerance](const AlphaAssignment& a) {
    double acc = 1.0;
    for (const auto& [id, alpha] : a.alphas)
      if (alpha.detect > tolerance.at(id)) acc -= 0.02;
    return acc;
  };
}

}  // namespace

TEST_CASE("single GEMM greedy search equals the global search") {
  for (double tol : {0.0, 0.1, 0.5, 0.9}) {
    const AccuracyFn acc = tolerance_oracle({{"only", tol}});
    const auto global = global_alpha_search({"only"}, acc, 1.0, 0.01, 1.0 / 64.0);
    const AlphaAssignment greedy = greedy_alpha_search({"only"}, acc, 0.01, 1.0 / 64.0);
    CHECK(greedy.alphas.at("only").detect == global.alpha);
    CHECK(greedy.infeasible == global.infeasible);
  }
}

TEST_CASE("greedy search optimizes each GEMM in turn") {
  const AccuracyFn acc = tolerance_oracle({{"a", 0.25}, {"b", 0.75}, {"c", 0.0}});
  std::vector<std::string> visited;
  const AccuracyFn logging = [&](const AlphaAssignment& a) {
    for (const auto& [id, alpha] : a.alphas)
      if (alpha.detect > 0 && (visited.empty() || visited.back() != id) &&
          std::find(visited.begin(), visited.end(), id) == visited.end())
        visited.push_back(id);
    return acc(a);
  };
  const AlphaAssignment r = greedy_alpha_search({"b", "a", "c"}, logging, 0.01, 1.0 / 64.0);
  CHECK(r.alphas.at("a").detect == 0.25);
  CHECK(r.alphas.at("b").detect == 0.75);
  CHECK(r.alphas.at("c").detect == 0.0);
  CHECK(r.alphas.at("a").localize == r.alphas.at("a").detect);
  CHECK(visited == std::vector<std::string>{"b", "a", "c"});
}

TEST_CASE("ascending order sorts by MACs with topological ties") {
  const Model m = build_model({});
  const auto inorder = search_order(m, SearchOrder::inorder);
  CHECK(inorder.front() == "layer0.attn.q");
  const auto asc = search_order(m, SearchOrder::ascending_size);
  REQUIRE(asc.size() == m.nodes().size());
  CHECK(asc.front() == "classifier");
  CHECK(asc[1] == "layer0.attn.h0.qk");
  CHECK(asc[2] == "layer0.attn.h0.av");
  for (std::size_t i = 1; i < asc.size(); ++i) {
    const auto& a = m.nodes()[m.node_index(asc[i - 1])];
    const auto& b = m.nodes()[m.node_index(asc[i])];
    CHECK(a.shape.macs() <= b.shape.macs());
    if (a.shape.macs() == b.shape.macs()) CHECK(m.node_index(a.id) < m.node_index(b.id));
  }
  CHECK(parse_search_order("ascending") == SearchOrder::ascending_size);
  CHECK_THROWS_AS(parse_search_order("random"), std::invalid_argument);
}

TEST_CASE("16^3 GEMM is visited before 32^3") {
  ModelConfig cfg;
  cfg.num_layers = 1;
  cfg.embed_dim = 32;
  cfg.num_heads = 2;
  cfg.seq_len = 32;
  const Model m = build_model(cfg);
  const auto asc = search_order(m, SearchOrder::ascending_size);
  const auto pos = [&](const std::string& id) { return std::find(asc.begin(), asc.end(), id) - asc.begin(); };
  // qk is 32x16x32, q is 32x32x32.
  CHECK(pos("layer0.attn.h0.qk") < pos("layer0.attn.q"));
}

TEST_CASE("profiles on the toy model") {
  const Model m = build_model({});
  const Dataset ds = generate_dataset(m, 10, 2);

  const auto clean = profile_all(m, ds, 0.0, 5, 1);
  REQUIRE(clean.size() == m.nodes().size());
  for (const auto& p : clean) {
    CHECK(p.msd_min <= p.msd_max);
    CHECK(p.msd_max <= fp_floor(0.0));
    CHECK(p.sample_count == 5);
  }

  const auto a = profile_all(m, ds, 1e-5, 20, 7);
  const auto b = profile_all(m, ds, 1e-5, 20, 7);
  CHECK(a == b);
  const DeviationProfile one = profile_deviations(m, ds, "layer1.ff1", 1e-5, 20, 7);
  CHECK(one == a[m.node_index("layer1.ff1")]);
  CHECK(one.msd_max > one.msd_min);
  CHECK(one.rcsd_min <= one.rcsd_max);
  CHECK_THROWS_AS(profile_deviations(m, ds, "nope", 1e-5, 2, 7), std::out_of_range);
  CHECK_THROWS_AS(profile_all(m, ds, 1e-5, 0, 7), std::invalid_argument);
}

TEST_CASE("thresholds follow the assignment") {
  const Model m = build_model({});
  std::vector<DeviationProfile> profiles;
  for (const auto& n : m.nodes()) profiles.push_back({n.id, 1e-6, 0.0, 100.0, 0.0, 10.0, 1, 0});
  AlphaAssignment a;
  a.alphas["layer0.ff1"] = {0.5, 0.25};
  const auto t = thresholds_for(m, profiles, a);
  REQUIRE(t.size() == m.nodes().size());
  const auto& ff1 = t[m.node_index("layer0.ff1")];
  CHECK(ff1.detect == 50.0);
  CHECK(ff1.row == 2.5);
  CHECK(ff1.col == 2.5);
  CHECK(t[0].detect == fp_floor(0.0));
  profiles.pop_back();
  CHECK_THROWS_AS(thresholds_for(m, profiles, a), std::invalid_argument);
}

TEST_CASE("model-level searches are deterministic") {
  const Model m = build_model({});
  const Dataset ds = generate_dataset(m, 20, 3);
  const auto profiles = profile_all(m, ds, 1e-6, 40, 11);
  SearchConfig cfg;
  cfg.ber = 1e-6;
  cfg.trials_per_eval = 2;
  cfg.resolution = 0.25;
  cfg.base_seed = 99;
  const AlphaAssignment g1 = greedy_gemmwise_search(m, ds, cfg, profiles);
  const AlphaAssignment g2 = greedy_gemmwise_search(m, ds, cfg, profiles);
  CHECK(g1 == g2);
  CHECK(g1.alphas.size() == m.nodes().size());
  for (const auto& [id, a] : g1.alphas) {
    CHECK(a.detect >= 0.0);
    CHECK(a.detect <= 1.0);
  }
  const AlphaAssignment b1 = binary_search_global_alpha(m, ds, cfg, profiles);
  const AlphaAssignment b2 = binary_search_global_alpha(m, ds, cfg, profiles);
  CHECK(b1 == b2);
  SearchConfig bad = cfg;
  bad.accuracy_budget = 2.0;
  CHECK_THROWS_AS(binary_search_global_alpha(m, ds, bad, profiles), std::invalid_argument);
}
