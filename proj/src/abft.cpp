#include "approxabft/abft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace approxabft {
namespace {

// NaN never compares greater, so test the negation.
bool exceeds(double deviation, double threshold) { return !(std::abs(deviation) <= threshold); }

bool deviations_agree(double rsd, double csd, double scale) {
  if (!std::isfinite(rsd) || !std::isfinite(csd)) return false;
  const double tol = fp_floor(scale) + 1e-6 * std::max(std::abs(rsd), std::abs(csd));
  return std::abs(rsd - csd) <= tol;
}

}  // namespace

double fp_floor(double predicted) {
  const double mag = std::abs(predicted);
  // Non-finite predictions cannot widen the allowance.
  return std::isfinite(mag) ? std::max(kFpFloorAbsolute, kFpFloorRelative * mag) : kFpFloorAbsolute;
}

bool is_known_strategy_name(std::string_view name) {
  return name == "none" || name == "baseline" || name == "v1" || name == "v2" || name == "opt" ||
         name == "opt-average";
}

std::optional<AbftStrategy> parse_strategy(std::string_view name) {
  if (name == "none") return std::nullopt;
  if (name == "baseline") return AbftStrategy::baseline();
  if (name == "v1") return AbftStrategy::v1();
  if (name == "v2") return AbftStrategy::v2();
  if (name == "opt") return AbftStrategy::opt();
  if (name == "opt-average") return AbftStrategy{Detection::AED, LocalizationMode::AEL, Correction::AEC_average};
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

Checksums precompute_checksums(const Matrix& a, const Matrix& b, OpCounter& counter) {
  const GemmShape s = gemm_shape(a, b);
  Checksums out;
  out.a_colsum = col_sums(a, counter);
  out.b_rowsum = row_sums(b, counter);
  double dot = 0.0;
  for (std::size_t p = 0; p < s.k; ++p) dot += out.a_colsum[p] * out.b_rowsum[p];
  out.predicted_total = dot;
  counter.abft_mults += s.k;
  counter.abft_adds += s.k - 1;
  return out;
}

DetectionReport detect(const Matrix& c, const Checksums& checksums, const ThresholdSet& thresholds,
                       OpCounter& counter) {
  DetectionReport r;
  r.msd = std::abs(checksums.predicted_total - total_sum(c, counter));
  r.threshold = std::max(fp_floor(checksums.predicted_total), thresholds.detect);
  r.triggered = exceeds(r.msd, r.threshold);
  counter.abft_comparisons += 1;
  return r;
}

SumProfiles compute_sum_profiles(const Matrix& a, const Matrix& b, const Matrix& c, const Checksums& checksums,
                                 OpCounter& counter) {
  const GemmShape s = gemm_shape(a, b);
  if (c.rows() != s.m || c.cols() != s.n) throw ShapeError("output shape does not match operands");
  if (checksums.a_colsum.size() != s.k || checksums.b_rowsum.size() != s.k)
    throw ShapeError("checksums do not match operands");

  SumProfiles p;
  // Predicted row sums: A * rowsum(B).
  p.predicted_row.assign(s.m, 0.0);
  for (std::size_t i = 0; i < s.m; ++i) {
    auto ar = a.row(i);
    double acc = 0.0;
    for (std::size_t q = 0; q < s.k; ++q) acc += static_cast<double>(ar[q]) * checksums.b_rowsum[q];
    p.predicted_row[i] = acc;
  }
  // Predicted column sums: colsum(A)^T * B.
  p.predicted_col.assign(s.n, 0.0);
  for (std::size_t q = 0; q < s.k; ++q) {
    auto br = b.row(q);
    const double w = checksums.a_colsum[q];
    for (std::size_t j = 0; j < s.n; ++j) p.predicted_col[j] += w * br[j];
  }
  counter.abft_mults += static_cast<std::uint64_t>(s.m) * s.k + static_cast<std::uint64_t>(s.k) * s.n;
  counter.abft_adds += static_cast<std::uint64_t>(s.m) * (s.k - 1) + static_cast<std::uint64_t>(s.n) * (s.k - 1);

  p.actual_row = row_sums(c, counter);
  p.actual_col = col_sums(c, counter);
  p.rsd.resize(s.m);
  p.csd.resize(s.n);
  for (std::size_t i = 0; i < s.m; ++i) p.rsd[i] = p.predicted_row[i] - p.actual_row[i];
  for (std::size_t j = 0; j < s.n; ++j) p.csd[j] = p.predicted_col[j] - p.actual_col[j];
  counter.abft_adds += s.m + s.n;
  return p;
}

Localization localize(const SumProfiles& profiles, const ThresholdSet& thresholds, OpCounter& counter) {
  Localization loc;
  for (std::size_t i = 0; i < profiles.rsd.size(); ++i)
    if (exceeds(profiles.rsd[i], std::max(fp_floor(profiles.predicted_row[i]), thresholds.row)))
      loc.faulty_rows.push_back(i);
  for (std::size_t j = 0; j < profiles.csd.size(); ++j)
    if (exceeds(profiles.csd[j], std::max(fp_floor(profiles.predicted_col[j]), thresholds.col)))
      loc.faulty_cols.push_back(j);
  counter.abft_comparisons += profiles.rsd.size() + profiles.csd.size();
  loc.candidates.reserve(loc.faulty_rows.size() * loc.faulty_cols.size());
  for (std::size_t r : loc.faulty_rows)
    for (std::size_t c : loc.faulty_cols) loc.candidates.push_back({r, c});
  return loc;
}

ExactCorrection correct_exact(const Matrix& c, const Localization& localization, const SumProfiles& profiles,
                              OpCounter& counter) {
  const auto& rows = localization.faulty_rows;
  const auto& cols = localization.faulty_cols;
  ExactCorrection out{c, {}, {}, {}};
  if (localization.candidates.empty()) return out;

  auto repair_from_row = [&](std::size_t r, std::size_t col) {
    double others = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j)
      if (j != col) others += c(r, j);
    out.output(r, col) = static_cast<float>(profiles.predicted_row[r] - others);
    counter.abft_adds += c.cols();
  };
  auto repair_from_col = [&](std::size_t r, std::size_t col) {
    double others = 0.0;
    for (std::size_t i = 0; i < c.rows(); ++i)
      if (i != r) others += c(i, col);
    out.output(r, col) = static_cast<float>(profiles.predicted_col[col] - others);
    counter.abft_adds += c.rows();
  };

  // Gap between row and column deviations, only needed when neither line is
  // a singleton. Infinite when the two do not agree within tolerance.
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> gap;
  if (rows.size() > 1 && cols.size() > 1) {
    gap.assign(rows.size(), std::vector<double>(cols.size(), kInf));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = 0; b < cols.size(); ++b) {
        const std::size_t r = rows[a], col = cols[b];
        const double scale = std::max(std::abs(profiles.predicted_row[r]), std::abs(profiles.predicted_col[col]));
        if (deviations_agree(profiles.rsd[r], profiles.csd[col], scale))
          gap[a][b] = std::abs(profiles.rsd[r] - profiles.csd[col]);
      }
    }
    counter.abft_comparisons += rows.size() * cols.size();
  }
  // A pair is taken only if each side is strictly the other's closest match.
  auto mutual_best = [&](std::size_t a, std::size_t b) {
    const double g = gap[a][b];
    if (!(g < kInf)) return false;
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (j != b && gap[a][j] <= g) return false;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (i != a && gap[i][b] <= g) return false;
    return true;
  };

  std::vector<bool> row_done(c.rows(), false), col_done(c.cols(), false);
  std::vector<bool> fixed(localization.candidates.size(), false);
  for (std::size_t idx = 0; idx < localization.candidates.size(); ++idx) {
    const Cell cell = localization.candidates[idx];
    if (cols.size() == 1) {
      repair_from_row(cell.row, cell.col);
    } else if (rows.size() == 1) {
      repair_from_col(cell.row, cell.col);
    } else {
      const std::size_t a = idx / cols.size();
      const std::size_t b = idx % cols.size();
      if (!mutual_best(a, b)) continue;
      repair_from_row(cell.row, cell.col);
    }
    fixed[idx] = true;
    row_done[cell.row] = true;
    col_done[cell.col] = true;
    out.corrected.push_back(cell);
  }
  for (std::size_t idx = 0; idx < localization.candidates.size(); ++idx) {
    if (fixed[idx]) continue;
    const Cell cell = localization.candidates[idx];
    if (row_done[cell.row] || col_done[cell.col])
      out.cleared.push_back(cell);
    else
      out.residual.push_back(cell);
  }
  return out;
}

Matrix correct_approx(Matrix c, const std::vector<Cell>& residual, const SumProfiles& profiles, ApproxMode mode,
                      OpCounter& counter) {
  if (residual.empty()) return c;
  if (mode == ApproxMode::zero) {
    for (const Cell& cell : residual) c(cell.row, cell.col) = 0.0f;
    return c;
  }
  std::vector<std::size_t> per_row(c.rows(), 0);
  for (const Cell& cell : residual) ++per_row[cell.row];
  std::vector<double> share(c.rows(), 0.0);
  for (std::size_t r = 0; r < c.rows(); ++r) {
    if (per_row[r] == 0) continue;
    share[r] = profiles.rsd[r] / static_cast<double>(per_row[r]);
    counter.abft_divs += 1;
  }
  for (const Cell& cell : residual) c(cell.row, cell.col) = static_cast<float>(c(cell.row, cell.col) + share[cell.row]);
  counter.abft_adds += residual.size();
  return c;
}

ProtectedGemm check_and_recover(const Matrix& a, const Matrix& b, const Checksums& checksums, Matrix raw,
                                const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter) {
  const ThresholdSet effective{
      strategy.detection == Detection::AED ? thresholds.detect : 0.0,
      strategy.localization == LocalizationMode::AEL ? thresholds.row : 0.0,
      strategy.localization == LocalizationMode::AEL ? thresholds.col : 0.0,
  };
  ProtectedGemm result;
  result.output = std::move(raw);
  result.correction.strategy = strategy.correction;
  result.detection = detect(result.output, checksums, effective, counter);
  if (!result.detection.triggered) return result;

  const SumProfiles profiles = compute_sum_profiles(a, b, result.output, checksums, counter);
  const Localization loc = localize(profiles, effective, counter);
  ExactCorrection exact = correct_exact(result.output, loc, profiles, counter);
  result.correction.exact_corrected = exact.corrected.size();
  switch (strategy.correction) {
    case Correction::BEC:
      result.output = std::move(exact.output);
      result.correction.ignored = exact.residual.size() + exact.cleared.size();
      break;
    case Correction::AEC_zero:
    case Correction::AEC_average:
      result.output = correct_approx(std::move(exact.output), exact.residual, profiles,
                                     strategy.correction == Correction::AEC_zero ? ApproxMode::zero
                                                                                 : ApproxMode::average,
                                     counter);
      result.correction.approx_corrected = exact.residual.size();
      result.correction.ignored = exact.cleared.size();
      break;
  }
  return result;
}

ProtectedGemm protect_gemm(const Matrix& a, const Matrix& b, const InjectionContext& injection,
                           const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter) {
  const Checksums checks = precompute_checksums(a, b, counter);
  Matrix raw = injection.stream ? faulty_gemm(a, b, injection.ber, *injection.stream, counter, injection.trace)
                                : gemm(a, b, counter);
  if (injection.forced)
    for (const ForcedFault& f : *injection.forced)
      if (f.gemm_id == injection.gemm_id) raw.at(f.row, f.col) += f.delta;
  return check_and_recover(a, b, checks, std::move(raw), strategy, thresholds, counter);
}

ProtectedGemm protect_gemm(const Matrix& a, const Matrix& b, const FaultConfig& cfg, RngStream& stream,
                           const AbftStrategy& strategy, const ThresholdSet& thresholds, OpCounter& counter) {
  cfg.validate();
  InjectionContext ctx;
  ctx.ber = cfg.ber;
  ctx.stream = &stream;
  ctx.forced = &cfg.forced;
  return protect_gemm(a, b, ctx, strategy, thresholds, counter);
}

}  // namespace approxabft
