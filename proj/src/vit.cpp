#include "approxabft/vit.hpp"

#include "approxabft/parallel.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace approxabft {
namespace {

class WeightSampler {
 public:
  explicit WeightSampler(std::uint64_t seed) : rng_(seed) {}

  // Uniform in [-bound, bound) from the top 24 bits; independent of the
  // standard library's distribution implementations.
  Matrix uniform(std::size_t rows, std::size_t cols, double bound) {
    Matrix m(rows, cols);
    for (float& v : m.data()) {
      const double u = static_cast<double>(rng_() >> 40) * 0x1.0p-24;
      v = static_cast<float>((2.0 * u - 1.0) * bound);
    }
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

LayerNormParams unit_layernorm(std::size_t dim) {
  return {std::vector<float>(dim, 1.0f), std::vector<float>(dim, 0.0f)};
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

class ForwardPass {
 public:
  ForwardPass(const Model& model, const ForwardOptions& opt, OpCounter& counter)
      : model_(model), opt_(opt), counter_(counter), reports_(model.nodes().size()) {}

  Matrix run(std::size_t idx, const Matrix& a, const Matrix& b) {
    const GemmNode& node = model_.nodes()[idx];
    GemmReport& report = reports_[idx];
    const FaultConfig* faults = opt_.faults;

    std::optional<RngStream> stream;
    if (faults && faults->ber > 0.0 && faults->in_scope(node.id))
      stream.emplace(StreamKey{faults->seed, gemm_key(node.id), opt_.stream_trial});

    std::optional<Checksums> checks;
    if (opt_.strategy) checks = precompute_checksums(a, b, counter_);

    FaultTrace trace;
    Matrix raw = stream ? faulty_gemm(a, b, faults->ber, *stream, counter_, opt_.observe ? &trace : nullptr)
                        : gemm(a, b, counter_);
    if (faults)
      for (const ForcedFault& f : faults->forced)
        if (f.gemm_id == node.id) raw.at(f.row, f.col) += f.delta;

    if (opt_.observe) report.observation = observe(a, b, raw, checks, trace);
    if (!opt_.strategy) return raw;

    static const ThresholdSet kZero{};
    const ThresholdSet& thr =
        (opt_.thresholds && !opt_.thresholds->empty()) ? opt_.thresholds->at(idx) : kZero;
    ProtectedGemm p = check_and_recover(a, b, *checks, std::move(raw), *opt_.strategy, thr, counter_);
    report.protected_run = true;
    report.detection = p.detection;
    report.correction = p.correction;
    return std::move(p.output);
  }

  std::vector<GemmReport> take_reports() { return std::move(reports_); }

 private:
  // Statistics are computed on a scratch counter: observing is not part of
  // the protected workload.
  static Observation observe(const Matrix& a, const Matrix& b, const Matrix& raw,
                             const std::optional<Checksums>& checks, const FaultTrace& trace) {
    OpCounter scratch;
    const Checksums cs = checks ? *checks : precompute_checksums(a, b, scratch);
    Observation o;
    o.msd = detect(raw, cs, {}, scratch).msd;
    const SumProfiles p = compute_sum_profiles(a, b, raw, cs, scratch);
    o.abs_rcsd.reserve(p.rsd.size() + p.csd.size());
    for (double d : p.rsd) o.abs_rcsd.push_back(std::abs(d));
    for (double d : p.csd) o.abs_rcsd.push_back(std::abs(d));
    const Localization loc = localize(p, {}, scratch);
    o.flagged_rows = loc.faulty_rows.size();
    o.flagged_cols = loc.faulty_cols.size();
    o.flips = trace.total_flips;
    if (trace.total_flips > 0) {
      for (std::size_t r : loc.faulty_rows) {
        std::size_t faulty = 0;
        for (std::size_t j = 0; j < trace.cols; ++j) faulty += trace.flips(r, j) > 0;
        o.multi_rows += faulty > 1;
      }
      for (std::size_t c : loc.faulty_cols) {
        std::size_t faulty = 0;
        for (std::size_t i = 0; i < trace.rows; ++i) faulty += trace.flips(i, c) > 0;
        o.multi_cols += faulty > 1;
      }
    }
    return o;
  }

  const Model& model_;
  const ForwardOptions& opt_;
  OpCounter& counter_;
  std::vector<GemmReport> reports_;
};

}  // namespace

void ModelConfig::validate() const {
  if (num_layers == 0 || embed_dim == 0 || num_heads == 0 || seq_len == 0 || ff_multiplier == 0 ||
      num_classes == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (embed_dim % num_heads != 0) throw std::invalid_argument("embed_dim must be divisible by num_heads");
}

const char* to_string(GemmKind kind) {
  switch (kind) {
    case GemmKind::weight_proj:
      return "weight_proj";
    case GemmKind::attn_score:
      return "attn_score";
    case GemmKind::attn_value:
      return "attn_value";
    case GemmKind::classifier:
      return "classifier";
  }
  return "unknown";
}

std::size_t Model::node_index(const std::string& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  throw std::out_of_range("unknown gemm id '" + id + "'");
}

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model model;
  model.config_ = cfg;
  const std::size_t d = cfg.embed_dim, s = cfg.seq_len, hd = cfg.head_dim(), ff = cfg.ff_multiplier * d;

  WeightSampler sampler(cfg.weight_seed);
  const double bound_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound_ff = 1.0 / std::sqrt(static_cast<double>(ff));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerWeights w;
    w.ln_attn = unit_layernorm(d);
    w.ln_ff = unit_layernorm(d);
    w.wq = sampler.uniform(d, d, bound_d);
    w.wk = sampler.uniform(d, d, bound_d);
    w.wv = sampler.uniform(d, d, bound_d);
    w.wo = sampler.uniform(d, d, bound_d);
    w.w_ff1 = sampler.uniform(d, ff, bound_d);
    w.w_ff2 = sampler.uniform(ff, d, bound_ff);
    model.layers_.push_back(std::move(w));

    const std::string p = layer_prefix(l);
    model.nodes_.push_back({p + "attn.q", {s, d, d}, GemmKind::weight_proj, l});
    model.nodes_.push_back({p + "attn.k", {s, d, d}, GemmKind::weight_proj, l});
    model.nodes_.push_back({p + "attn.v", {s, d, d}, GemmKind::weight_proj, l});
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      const std::string hp = p + "attn.h" + std::to_string(h) + ".";
      model.nodes_.push_back({hp + "qk", {s, hd, s}, GemmKind::attn_score, l});
      model.nodes_.push_back({hp + "av", {s, s, hd}, GemmKind::attn_value, l});
    }
    model.nodes_.push_back({p + "attn.o", {s, d, d}, GemmKind::weight_proj, l});
    model.nodes_.push_back({p + "ff1", {s, d, ff}, GemmKind::weight_proj, l});
    model.nodes_.push_back({p + "ff2", {s, ff, d}, GemmKind::weight_proj, l});
  }
  model.ln_final_ = unit_layernorm(d);
  model.classifier_ = sampler.uniform(d, cfg.num_classes, bound_d);
  model.nodes_.push_back({"classifier", {1, d, cfg.num_classes}, GemmKind::classifier, cfg.num_layers});
  return model;
}

ForwardResult forward(const Model& model, const Matrix& input, const ForwardOptions& options, OpCounter& counter) {
  const ModelConfig& cfg = model.config();
  if (input.rows() != cfg.seq_len || input.cols() != cfg.embed_dim)
    throw ShapeError("input must be seq_len x embed_dim");
  if (options.faults) options.faults->validate();
  if (options.thresholds && !options.thresholds->empty() && options.thresholds->size() != model.nodes().size())
    throw std::invalid_argument("threshold table does not match the model's GEMM nodes");

  ForwardPass pass(model, options, counter);
  const std::size_t hd = cfg.head_dim();
  const float score_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(hd)));

  Matrix x = input;
  std::size_t node = 0;
  for (const LayerWeights& w : model.layers()) {
    const Matrix h = layernorm_rows(x, w.ln_attn);
    const Matrix q = pass.run(node++, h, w.wq);
    const Matrix k = pass.run(node++, h, w.wk);
    const Matrix v = pass.run(node++, h, w.wv);
    Matrix heads(cfg.seq_len, cfg.embed_dim);
    for (std::size_t head = 0; head < cfg.num_heads; ++head) {
      const std::size_t off = head * hd;
      Matrix scores = pass.run(node++, q.col_slice(off, hd), k.col_slice(off, hd).transposed());
      scores *= score_scale;
      const Matrix attn = softmax_rows(scores);
      heads.set_col_slice(off, pass.run(node++, attn, v.col_slice(off, hd)));
    }
    x += pass.run(node++, heads, w.wo);
    const Matrix h2 = layernorm_rows(x, w.ln_ff);
    const Matrix f = gelu(pass.run(node++, h2, w.w_ff1));
    x += pass.run(node++, f, w.w_ff2);
  }
  const Matrix xf = layernorm_rows(x, model.ln_final());
  Matrix pooled(1, cfg.embed_dim);
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cfg.seq_len; ++i) acc += xf(i, j);
    pooled(0, j) = static_cast<float>(acc / static_cast<double>(cfg.seq_len));
  }
  const Matrix logits = pass.run(node++, pooled, model.classifier());

  ForwardResult result;
  result.logits.assign(logits.data().begin(), logits.data().end());
  result.reports = pass.take_reports();
  return result;
}

std::size_t argmax(const std::vector<float>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best] || (std::isnan(logits[best]) && !std::isnan(logits[i]))) best = i;
  return best;
}

Dataset generate_dataset(const Model& model, std::size_t n_samples, std::uint64_t data_seed) {
  if (n_samples == 0) throw std::invalid_argument("dataset needs at least one sample");
  const ModelConfig& cfg = model.config();
  Dataset ds;
  WeightSampler sampler(data_seed);
  OpCounter scratch;
  for (std::size_t s = 0; s < n_samples; ++s) {
    ds.inputs.push_back(sampler.uniform(cfg.seq_len, cfg.embed_dim, 1.0));
    ds.labels.push_back(argmax(forward(model, ds.inputs.back(), {}, scratch).logits));
  }
  return ds;
}

AccuracyResult evaluate_accuracy(const Model& model, const Dataset& dataset, const FaultConfig* faults,
                                 const std::optional<AbftStrategy>& strategy,
                                 const std::vector<ThresholdSet>* thresholds) {
  if (dataset.inputs.empty()) throw std::invalid_argument("dataset is empty");
  AccuracyResult out;
  out.node_triggers.assign(model.nodes().size(), 0);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < dataset.inputs.size(); ++s) {
    ForwardOptions opt;
    opt.faults = faults;
    opt.strategy = strategy;
    opt.thresholds = thresholds;
    opt.stream_trial = s;
    const ForwardResult r = forward(model, dataset.inputs[s], opt, out.counter);
    correct += argmax(r.logits) == dataset.labels[s];
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
      const GemmReport& rep = r.reports[i];
      if (!rep.protected_run) continue;
      out.detections_triggered += rep.detection.triggered;
      out.node_triggers[i] += rep.detection.triggered;
      out.exact_corrected += rep.correction.exact_corrected;
      out.approx_corrected += rep.correction.approx_corrected;
      out.ignored += rep.correction.ignored;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.inputs.size());
  return out;
}

std::vector<AccuracyResult> evaluate_trials(const Model& model, const Dataset& dataset, const FaultConfig& faults,
                                            std::uint64_t base_seed, std::size_t trials,
                                            const std::optional<AbftStrategy>& strategy,
                                            const std::vector<ThresholdSet>* thresholds, std::size_t threads) {
  std::vector<AccuracyResult> out(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    FaultConfig cfg = faults;
    cfg.seed = base_seed + t;
    out[t] = evaluate_accuracy(model, dataset, &cfg, strategy, thresholds);
  });
  return out;
}

double mean_accuracy(const std::vector<AccuracyResult>& results) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const AccuracyResult& r : results) sum += r.accuracy;
  return sum / static_cast<double>(results.size());
}

std::uint64_t predicted_abft_mults(const Model& model, const std::vector<std::uint64_t>& node_triggers,
                                   std::uint64_t forwards) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < model.nodes().size(); ++i) {
    const GemmShape& s = model.nodes()[i].shape;
    total += forwards * s.k;
    const std::uint64_t triggers = i < node_triggers.size() ? node_triggers[i] : 0;
    total += triggers * (static_cast<std::uint64_t>(s.m) * s.k + static_cast<std::uint64_t>(s.k) * s.n);
  }
  return total;
}

}  // namespace approxabft
