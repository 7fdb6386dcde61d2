#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "approxabft/abft.hpp"
#include "approxabft/vit.hpp"

namespace approxabft {

/// Empirical range of raw checksum deviations of one GEMM under random
/// faults. Non-finite samples are counted but excluded from the range.
struct DeviationProfile {
  std::string gemm_id;
  double ber = 0.0;
  double msd_min = 0.0;
  double msd_max = 0.0;
  double rcsd_min = 0.0;
  double rcsd_max = 0.0;
  std::size_t sample_count = 0;
  std::size_t nonfinite_count = 0;

  bool operator==(const DeviationProfile&) const = default;
};

struct AlphaPair {
  double detect = 0.0;
  double localize = 0.0;
  bool operator==(const AlphaPair&) const = default;
};

struct AlphaAssignment {
  std::map<std::string, AlphaPair> alphas;
  /// Set when some search step found even alpha = 0 infeasible.
  bool infeasible = false;

  bool operator==(const AlphaAssignment&) const = default;
};

enum class SearchOrder { inorder, ascending_size };
const char* to_string(SearchOrder order);
SearchOrder parse_search_order(const std::string& name);  // "inorder" | "ascending" | "ascending_size"

struct SearchConfig {
  double accuracy_budget = 0.01;
  std::size_t trials_per_eval = 10;
  double ber = 0.0;
  double resolution = 1.0 / 64.0;
  SearchOrder order = SearchOrder::ascending_size;
  /// Trial t of every evaluation uses fault seed base_seed + t.
  std::uint64_t base_seed = 0;
  std::size_t threads = 1;
  /// Strategy used for every accuracy evaluation during the search.
  AbftStrategy strategy = AbftStrategy::opt();

  void validate() const;
};

/// Runs `trials` fault-injected forward passes (trial t: fault seed seed + t,
/// dataset sample t mod n) and records every GEMM's raw deviations. One
/// profile per node, in node order.
std::vector<DeviationProfile> profile_all(const Model& model, const Dataset& dataset, double ber, std::size_t trials,
                                          std::uint64_t seed);

DeviationProfile profile_deviations(const Model& model, const Dataset& dataset, const std::string& gemm_id,
                                    double ber, std::size_t trials, std::uint64_t seed);

/// max(fp_floor, min + (max - min) * alpha), with the absolute floor fp_floor(0).
double alpha_to_threshold(double profile_min, double profile_max, double alpha);

/// Per-node thresholds for `assignment`; nodes without an entry get alpha 0.
/// Throws std::invalid_argument if a node has no profile.
std::vector<ThresholdSet> thresholds_for(const Model& model, const std::vector<DeviationProfile>& profiles,
                                         const AlphaAssignment& assignment);

struct BinarySearchResult {
  double alpha = 0.0;
  bool infeasible = false;
  std::vector<double> evaluated;  // alphas in evaluation order
};

/// Largest feasible alpha in [0, 1) to within `resolution`, assuming
/// feasibility is monotone. Bisects ceil(log2(1/resolution)) times; alpha 0
/// is evaluated only when every probe failed, to set the infeasible flag.
BinarySearchResult binary_search_alpha(const std::function<bool(double)>& feasible, double resolution);

/// Accuracy of a whole assignment; the searches only see this function.
using AccuracyFn = std::function<double(const AlphaAssignment&)>;

/// One alpha for every GEMM in `ids`. Feasible when
/// accuracy >= reference - budget; a non-positive reference - budget
/// returns alpha 1 without evaluating.
BinarySearchResult global_alpha_search(const std::vector<std::string>& ids, const AccuracyFn& accuracy,
                                       double reference, double budget, double resolution);

/// Visits `order` one GEMM at a time. Each step holds earlier choices fixed
/// and later GEMMs at alpha 0, and accepts the largest alpha whose accuracy
/// stays within `budget` of the step's alpha-0 accuracy.
AlphaAssignment greedy_alpha_search(const std::vector<std::string>& order, const AccuracyFn& accuracy, double budget,
                                    double resolution);

/// Node ids in visiting order: topological, or by m*k*n with topological
/// position breaking ties.
std::vector<std::string> search_order(const Model& model, SearchOrder order);

/// Mean accuracy over cfg.trials_per_eval trials under cfg.strategy with the
/// thresholds implied by `assignment`.
double assignment_accuracy(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                           const std::vector<DeviationProfile>& profiles, const AlphaAssignment& assignment);

/// Model-level searches; the reference accuracy for the global search is the
/// clean accuracy (1.0 on a self-labeled dataset).
AlphaAssignment binary_search_global_alpha(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                                           const std::vector<DeviationProfile>& profiles);
AlphaAssignment greedy_gemmwise_search(const Model& model, const Dataset& dataset, const SearchConfig& cfg,
                                       const std::vector<DeviationProfile>& profiles);

}  // namespace approxabft
