#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "approxabft/config.hpp"
#include "approxabft/threshold.hpp"
#include "approxabft/vit.hpp"

namespace approxabft {

struct CampaignRow {
  double ber = 0.0;
  std::string strategy;
  std::uint64_t trial = 0;
  double accuracy = 0.0;
  std::uint64_t workload_mults = 0;
  std::uint64_t abft_mults = 0;
  std::uint64_t abft_adds = 0;
  std::uint64_t abft_comparisons = 0;
  std::uint64_t detections_triggered = 0;
  std::uint64_t exact_corrected = 0;
  std::uint64_t approx_corrected = 0;
  std::uint64_t ignored = 0;

  bool operator==(const CampaignRow&) const = default;
};

/// Rows ordered by (ber, strategy name, trial).
struct CampaignResult {
  std::vector<CampaignRow> rows;
  bool operator==(const CampaignResult&) const = default;
};

/// Profiles plus alphas; together they fix the calibrated thresholds.
struct Calibration {
  std::vector<DeviationProfile> profiles;
  AlphaAssignment alphas;
};

/// Reads cfg.profiles_path and cfg.alphas_path. Throws ConfigError when a
/// strategy needs them and either is missing or unreadable.
std::optional<Calibration> load_calibration(const CampaignConfig& cfg);

/// Every (ber, strategy, trial) evaluates the full dataset with fault seed
/// base_seed + trial. Trials run on cfg.threads workers; the result does not
/// depend on the worker count.
CampaignResult run_campaign(const CampaignConfig& cfg, const Model& model, const Dataset& dataset,
                            const std::optional<Calibration>& calibration);
/// Builds the model and dataset and loads calibration files.
CampaignResult run_campaign(const CampaignConfig& cfg);

void sort_rows(std::vector<CampaignRow>& rows);

inline constexpr const char* kCsvHeader =
    "ber,strategy,trial,accuracy,workload_mults,abft_mults,abft_adds,abft_comparisons,detections_triggered,"
    "exact_corrected,approx_corrected,ignored";

std::string to_csv(const CampaignResult& result);
CampaignResult parse_csv(const std::string& text);
std::string to_json(const CampaignResult& result);
CampaignResult parse_json(const std::string& text);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct Histogram {
  std::vector<double> edges;  // bins + 1 ascending edges
  std::vector<std::uint64_t> counts;
  std::uint64_t nonfinite = 0;  // samples kept out of the bins

  std::uint64_t total() const;
  /// Share of finite samples in the first bin.
  double lowest_bin_fraction() const;
};

/// Linear bins over [min, max] of the finite samples; the maximum falls in
/// the last bin.
Histogram make_histogram(const std::vector<double>& samples, std::size_t bins);

struct GemmStats {
  std::string gemm_id;
  Histogram msd;
  Histogram rcsd;
};

struct StatsReport {
  double ber = 0.0;
  std::size_t trials = 0;
  std::vector<GemmStats> gemms;
  /// Flagged rows plus columns, at baseline thresholds, holding more than
  /// one faulty cell by ground truth, over all flagged rows plus columns of
  /// the selected GEMMs. Zero when nothing was flagged.
  double multi_error_fraction = 0.0;
  std::uint64_t multi_error_lines = 0;
  std::uint64_t flagged_lines = 0;
};

inline constexpr const char* kMultiErrorDenominator = "flagged rows + flagged columns at baseline thresholds";

/// Per layer, the node with the largest output (m*n); ties go to the earlier
/// node. The classifier is not part of any layer.
std::vector<std::string> largest_per_layer(const Model& model);

/// Trial t runs one unprotected forward on sample t mod n with fault seed
/// base_seed + t. Throws std::out_of_range for unknown ids.
StatsReport compute_stats(const Model& model, const Dataset& dataset, const std::vector<std::string>& gemm_ids,
                          double ber, std::size_t trials, std::uint64_t base_seed, std::size_t bins = 10);

std::string stats_to_json(const std::vector<StatsReport>& reports);
std::string stats_to_csv(const std::vector<StatsReport>& reports);

/// id,kind,m,k,n table of the model's GEMM nodes.
std::string gemm_table_csv(const Model& model);

}  // namespace approxabft
