#include "approxabft/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace approxabft {
namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t nonfinite = 0;

  void add(double v) {
    if (!std::isfinite(v)) {
      ++nonfinite;
      return;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double min_or_zero() const { return lo <= hi ? lo : 0.0; }
  double max_or_zero() const { return lo <= hi ? hi : 0.0; }
};

AlphaAssignment uniform_assignment(const std::vector<std::string>& ids, double alpha) {
  AlphaAssignment a;
  for (const std::string& id : ids) a.alphas[id] = {alpha, alpha};
  return a;
}

}  // namespace

const char* to_string(SearchOrder order) {
  return order == SearchOrder::inorder ? "inorder" : "ascending_size";
}

SearchOrder parse_search_order(const std::string& name) {
  if (name == "inorder") return SearchOrder::inorder;
  if (name == "ascending" || name == "ascending_size") return SearchOrder::ascending_size;
  throw std::invalid_argument("unknown search order '" + name + "'");
}

void SearchConfig::validate() const {
  if (!(accuracy_budget >= 0.0 && accuracy_budget <= 1.0)) throw std::invalid_argument("budget must be in [0, 1]");
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  if (trials_per_eval == 0) throw std::invalid_argument("trials_per_eval must be at least 1");
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::invalid_argument("ber must be in [0, 1]");
}

std::vector<DeviationProfile> profile_all(const Model& model, const Dataset& dataset, double ber, std::size_t trials,
                                          std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("profiling needs at least one trial");
  if (dataset.inputs.empty()) throw std::invalid_argument("dataset is empty");
  const std::size_t nodes = model.nodes().size();
  std::vector<Range> msd(nodes), rcsd(nodes);
  for (std::size_t t = 0; t < trials; ++t) {
    FaultConfig faults;
    faults.ber = ber;
    faults.seed = seed + t;
    ForwardOptions opt;
    opt.faults = &faults;
    opt.observe = true;
    opt.stream_trial = t % dataset.inputs.size();
    OpCounter scratch;
    const ForwardResult r = forward(model, dataset.inputs[opt.stream_trial], opt, scratch);
    for (std::size_t i = 0; i < nodes; ++i) {
      const Observation& o = *r.reports[i].observation;
      msd[i].add(o.msd);
      for (double d : o.abs_rcsd) rcsd[i].add(d);
    }
  }
  std::vector<DeviationProfile> out;
  out.reserve(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    DeviationProfile p;
    p.gemm_id = model.nodes()[i].id;
    p.ber = ber;
    p.msd_min = msd[i].min_or_zero();
    p.msd_max = msd[i].max_or_zero();
    p.rcsd_min = rcsd[i].min_or_zero();
    p.rcsd_max = rcsd[i].max_or_zero();
    p.sample_count = trials;
    p.nonfinite_count = msd[i].nonfinite;
    out.push_back(std::move(p));
  }
  return out;
}

DeviationProfile profile_deviations(const Model& model, const Dataset& dataset, const std::string& gemm_id,
                                    double ber, std::size_t trials, std::uint64_t seed) {
  const std::size_t idx = model.node_index(gemm_id);
  return profile_all(model, dataset, ber, trials, seed)[idx];
}

double alpha_to_threshold(double profile_min, double profile_max, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
  if (!(profile_min <= profile_max)) throw std::invalid_argument("profile min exceeds max");
  const double t = alpha == 1.0 ? profile_max : profile_min + (profile_max - profile_min) * alpha;
  return std::max(fp_floor(0.0), t);
}

std::vector<ThresholdSet> thresholds_for(const Model& model, const std::vector<DeviationProfile>& profiles,
                                         const AlphaAssignment& assignment) {
  std::vector<ThresholdSet> out;
  out.reserve(model.nodes().size());
  for (const GemmNode& node : model.nodes()) {
    const auto p = std::find_if(profiles.begin(), profiles.end(),
                                [&](const DeviationProfile& d) { return d.gemm_id == node.id; });
    if (p == profiles.end()) throw std::invalid_argument("no deviation profile for '" + node.id + "'");
    const auto a = assignment.alphas.find(node.id);
    const AlphaPair alpha = a == assignment.alphas.end() ? AlphaPair{} : a->second;
    const double loc = alpha_to_threshold(p->rcsd_min, p->rcsd_max, alpha.localize);
    out.push_back({alpha_to_threshold(p->msd_min, p->msd_max, alpha.detect), loc, loc});
  }
  return out;
}

BinarySearchResult binary_search_alpha(const std::function<bool(double)>& feasible, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  BinarySearchResult r;
  const int rounds = std::max(0, static_cast<int>(std::ceil(std::log2(1.0 / resolution) - 1e-12)));
  double lo = 0.0, hi = 1.0;
  bool any_feasible = false;
  for (int i = 0; i < rounds; ++i) {
    const double mid = 0.5 * (lo + hi);
    r.evaluated.push_back(mid);
    if (feasible(mid)) {
      lo = mid;
      any_feasible = true;
    } else {
      hi = mid;
    }
  }
  if (!any_feasible) {
    r.evaluated.push_back(0.0);
    r.infeasible = !feasible(0.0);
  }
  r.alpha = lo;
  return r;
}

BinarySearchResult global_alpha_search(const std::vector<std::string>& ids, const AccuracyFn& accuracy,
                                       double reference, double budget, double resolution) {
  const double floor = reference - budget;
  if (floor <= 0.0) return {1.0, false, {}};
  return binary_search_alpha([&](double a) { return accuracy(uniform_assignment(ids, a)) >= floor; }, resolution);
}

AlphaAssignment greedy_alpha_search(const std::vector<std::string>& order, const AccuracyFn& accuracy, double budget,
                                    double resolution) {
  AlphaAssignment current = uniform_assignment(order, 0.0);
  for (const std::string& id : order) {
    const double floor = accuracy(current) - budget;
    if (floor <= 0.0) {
      current.alphas[id] = {1.0, 1.0};
      continue;
    }
    const BinarySearchResult r = binary_search_alpha(
        [&](double a) {
          AlphaAssignment trial = current;
          trial.alphas[id] = {a, a};
          return accuracy(trial) >= floor;
        },
        resolution);
    current.alphas[id] = {r.alpha, r.alpha};
    current.infeasible = current.infeasible || r.infeasible;
  }
  return current;
}

std::vector<std::string> search_order(const Model& model, SearchOrder order) {
  const auto& nodes = model.nodes();
  std::vector<std::size_t> idx(nodes.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (order == SearchOrder::ascending_size)
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return nodes[a].shape.macs() < nodes[b].shape.macs(); });
  std::vector<std::string> ids;
  for (std::size_t i : idx) ids.push_back(nodes[i].id);
  return ids;
}

double assignment_accuracy(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                           const std::vector<DeviationProfile>& profiles, const AlphaAssignment& assignment) {
  const std::vector<ThresholdSet> thresholds = thresholds_for(model, profiles, assignment);
  FaultConfig faults;
  faults.ber = cfg.ber;
  return mean_accuracy(evaluate_trials(model, dataset, faults, cfg.base_seed, cfg.trials_per_eval, cfg.strategy,
                                       &thresholds, cfg.threads));
}

AlphaAssignment binary_search_global_alpha(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                                           const std::vector<DeviationProfile>& profiles) {
  cfg.validate();
  const std::vector<std::string> ids = search_order(model, SearchOrder::inorder);
  const AccuracyFn acc = [&](const AlphaAssignment& a) { return assignment_accuracy(model, dataset, cfg, profiles, a); };
  const BinarySearchResult r = global_alpha_search(ids, acc, 1.0, cfg.accuracy_budget, cfg.resolution);
  AlphaAssignment out = uniform_assignment(ids, r.alpha);
  out.infeasible = r.infeasible;
  return out;
}

AlphaAssignment greedy_gemmwise_search(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                                       const std::vector<DeviationProfile>& profiles) {
  cfg.validate();
  const AccuracyFn acc = [&](const AlphaAssignment& a) { return assignment_accuracy(model, dataset, cfg, profiles, a); };
  return greedy_alpha_search(search_order(model, cfg.order), acc, cfg.accuracy_budget, cfg.resolution);
}

}  // namespace approxabft
