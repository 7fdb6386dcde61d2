#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "approxabft/fault_injector.hpp"
#include "approxabft/threshold.hpp"
#include "approxabft/vit.hpp"

namespace approxabft {

/// Malformed or inconsistent campaign configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::size_t n_samples = 100;
  std::uint64_t data_seed = 0;
};

enum class SearchMode { global, gemmwise };
const char* to_string(SearchMode mode);

struct SearchSettings {
  SearchMode mode = SearchMode::gemmwise;
  double ber = 1e-7;
  double budget = 0.01;
  std::size_t trials_per_eval = 10;
  double resolution = 1.0 / 64.0;
  SearchOrder order = SearchOrder::ascending_size;
  std::string strategy = "opt";
  std::uint64_t seed = 0;
  std::size_t profile_trials = 200;
  std::uint64_t profile_seed = 0;
};

/// Output paths; an empty path means "do not write".
struct OutputPaths {
  std::filesystem::path csv;
  std::filesystem::path json;
  std::filesystem::path profiles;
  std::filesystem::path alphas;
  std::filesystem::path stats;
};

struct CampaignConfig {
  ModelConfig model;
  DatasetConfig dataset;

  std::vector<double> bers;
  std::size_t trials = 1;
  std::uint64_t base_seed = 0;
  std::set<std::string> scope;
  std::vector<ForcedFault> forced;

  std::vector<std::string> strategies;
  /// Calibration inputs for the approximate strategies.
  std::optional<std::filesystem::path> profiles_path;
  std::optional<std::filesystem::path> alphas_path;

  /// Only meaningful when has_search; profiling and searching require it.
  SearchSettings search;
  bool has_search = false;
  OutputPaths output;
  std::size_t threads = 1;

  /// Throws ConfigError.
  void validate() const;
  /// True when some strategy uses calibrated thresholds.
  bool needs_calibration() const;
};

/// Parses the JSON-compatible config text. Relative paths are resolved
/// against `base_dir`. Throws ConfigError.
CampaignConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
CampaignConfig load_config(const std::filesystem::path& path);

std::string profiles_to_json(const std::vector<DeviationProfile>& profiles);
std::vector<DeviationProfile> profiles_from_json(const std::string& text);

std::string alphas_to_json(const AlphaAssignment& assignment);
AlphaAssignment alphas_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace approxabft
