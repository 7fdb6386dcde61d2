#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "approxabft/fault_injector.hpp"
#include "approxabft/tensor.hpp"

namespace approxabft {

/// Round-off allowance for a checksum comparison against `predicted`:
/// max(absolute, relative * |predicted|). The absolute term covers sums that
/// cancel to near zero while their float round-off does not.
inline constexpr double kFpFloorAbsolute = 4e-4;
inline constexpr double kFpFloorRelative = 1e-4;
double fp_floor(double predicted);

struct Checksums {
  std::vector<double> a_colsum;  // length k
  std::vector<double> b_rowsum;  // length k
  double predicted_total = 0.0;
};

struct DetectionReport {
  double msd = 0.0;
  double threshold = 0.0;
  bool triggered = false;
};

/// Deviations are predicted minus actual.
struct SumProfiles {
  std::vector<double> predicted_row, actual_row, rsd;
  std::vector<double> predicted_col, actual_col, csd;
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const Cell&) const = default;
};

struct Localization {
  std::vector<std::size_t> faulty_rows;  // ascending
  std::vector<std::size_t> faulty_cols;  // ascending
  std::vector<Cell> candidates;          // faulty_rows x faulty_cols, row-major
};

enum class Detection { BED, AED };
enum class LocalizationMode { BEL, AEL };
enum class Correction { BEC, AEC_zero, AEC_average };

struct AbftStrategy {
  Detection detection = Detection::BED;
  LocalizationMode localization = LocalizationMode::BEL;
  Correction correction = Correction::BEC;

  static AbftStrategy baseline() { return {}; }
  static AbftStrategy v1() { return {Detection::AED, LocalizationMode::BEL, Correction::BEC}; }
  static AbftStrategy v2() { return {Detection::AED, LocalizationMode::AEL, Correction::BEC}; }
  static AbftStrategy opt() { return {Detection::AED, LocalizationMode::AEL, Correction::AEC_zero}; }

  bool operator==(const AbftStrategy&) const = default;
};

/// Strategy by name: baseline | v1 | v2 | opt | opt-average. Returns
/// nullopt for "none" (unprotected). Throws std::invalid_argument otherwise.
std::optional<AbftStrategy> parse_strategy(std::string_view name);
bool is_known_strategy_name(std::string_view name);

/// Calibrated thresholds. Every comparison uses
/// max(fp_floor(predicted quantity), calibrated), so the zero set is the
/// classical exact check.
struct ThresholdSet {
  double detect = 0.0;
  double row = 0.0;
  double col = 0.0;
};

struct CorrectionReport {
  std::size_t exact_corrected = 0;
  std::size_t approx_corrected = 0;
  std::size_t ignored = 0;
  Correction strategy = Correction::BEC;
};

Checksums precompute_checksums(const Matrix& a, const Matrix& b, OpCounter& counter);

DetectionReport detect(const Matrix& c, const Checksums& checksums, const ThresholdSet& thresholds,
                       OpCounter& counter);

SumProfiles compute_sum_profiles(const Matrix& a, const Matrix& b, const Matrix& c, const Checksums& checksums,
                                 OpCounter& counter);

Localization localize(const SumProfiles& profiles, const ThresholdSet& thresholds, OpCounter& counter);

struct ExactCorrection {
  Matrix output;
  std::vector<Cell> corrected;
  std::vector<Cell> residual;
  /// Candidates left alone because their row or column deviation was fully
  /// accounted for by an exact correction.
  std::vector<Cell> cleared;
};

/// Single-pass exact correction.
///
/// A candidate is repaired from its row checksum when it is the only
/// candidate in its row, otherwise from its column checksum when it is the
/// only candidate in its column. When neither holds, the candidate is still
/// repaired if its row and column deviations agree and it is the only such
/// agreeing pair in both its row and column (errors on distinct rows and
/// columns). Repairs recompute the element from the predicted sum and the
/// other elements of the line, so Inf/NaN elements are restored too.
ExactCorrection correct_exact(const Matrix& c, const Localization& localization, const SumProfiles& profiles,
                              OpCounter& counter);

enum class ApproxMode { zero, average };

Matrix correct_approx(Matrix c, const std::vector<Cell>& residual, const SumProfiles& profiles, ApproxMode mode,
                      OpCounter& counter);

struct ProtectedGemm {
  Matrix output;
  DetectionReport detection;
  CorrectionReport correction;
};

/// Inputs for fault injection inside protect_gemm. A null stream means the
/// GEMM runs fault-free.
struct InjectionContext {
  double ber = 0.0;
  RngStream* stream = nullptr;
  const std::vector<ForcedFault>* forced = nullptr;
  std::string_view gemm_id;
  FaultTrace* trace = nullptr;
};

/// Detection on an already computed output, then recovery when it fires.
/// Thresholds not enabled by the strategy are treated as zero.
ProtectedGemm check_and_recover(const Matrix& a, const Matrix& b, const Checksums& checksums, Matrix raw,
                                const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter);

/// Checksums, faulty GEMM and detection; recovery runs only when the
/// detection fires.
ProtectedGemm protect_gemm(const Matrix& a, const Matrix& b, const InjectionContext& injection,
                           const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter);

/// Draws faults from `stream` at cfg.ber. Forced faults with an empty
/// gemm_id apply.
ProtectedGemm protect_gemm(const Matrix& a, const Matrix& b, const FaultConfig& cfg, RngStream& stream,
                           const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter);

}  // namespace approxabft
