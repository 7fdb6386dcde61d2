#include "approxabft/fault_injector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace approxabft {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t gemm_key(std::string_view gemm_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : gemm_id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(StreamKey key) {
  base_ = mix64(key.seed + kGolden);
  base_ = mix64(base_ ^ (key.gemm + 2 * kGolden));
  base_ = mix64(base_ ^ (key.trial + 3 * kGolden));
}

RngStream RngStream::scripted(std::vector<std::uint64_t> flip_positions) {
  RngStream s;
  s.scripted_ = true;
  std::sort(flip_positions.begin(), flip_positions.end());
  flip_positions.erase(std::unique(flip_positions.begin(), flip_positions.end()), flip_positions.end());
  s.script_ = std::move(flip_positions);
  return s;
}

double RngStream::next_uniform() {
  const std::uint64_t x = mix64(base_ + (draws_++) * kGolden);
  // (0, 1]
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t RngStream::next_flip(double ber) {
  if (scripted_) {
    while (script_pos_ < script_.size() && script_[script_pos_] < cursor_) ++script_pos_;
    return script_pos_ < script_.size() ? script_[script_pos_] : kNever;
  }
  if (ber != pending_ber_ || (pending_ != kNever && pending_ < cursor_)) {
    // Memorylessness: restarting the gap draw at the cursor leaves the
    // per-position flip law unchanged.
    pending_ber_ = ber;
    pending_ = cursor_;
    if (ber <= 0.0) {
      pending_ = kNever;
    } else if (ber < 1.0) {
      const double gap = std::floor(std::log(next_uniform()) / std::log1p(-ber));
      pending_ = gap >= static_cast<double>(kNever - cursor_) ? kNever : cursor_ + static_cast<std::uint64_t>(gap);
    }
  }
  return pending_;
}

std::vector<std::uint64_t> RngStream::take_flips(std::uint64_t count, double ber) {
  std::vector<std::uint64_t> out;
  const std::uint64_t end = cursor_ + count;
  for (std::uint64_t pos = next_flip(ber); pos < end; pos = next_flip(ber)) {
    out.push_back(pos - cursor_);
    if (scripted_) {
      ++script_pos_;
      continue;
    }
    // Draw the gap to the following flip.
    if (ber >= 1.0) {
      pending_ = pos + 1;
    } else {
      const double gap = std::floor(std::log(next_uniform()) / std::log1p(-ber));
      pending_ = gap >= static_cast<double>(kNever - pos - 1) ? kNever : pos + 1 + static_cast<std::uint64_t>(gap);
    }
  }
  cursor_ = end;
  return out;
}

std::uint32_t RngStream::flip_mask(double ber) {
  if (!scripted_ && ber == pending_ber_ && pending_ >= cursor_ && pending_ - cursor_ >= 32) {
    cursor_ += 32;
    return 0;
  }
  std::uint32_t mask = 0;
  for (std::uint64_t off : take_flips(32, ber)) mask |= 1u << off;
  return mask;
}

void FaultConfig::validate() const {
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::invalid_argument("ber must lie in [0, 1]");
}

float flip_bits(float value, double ber, RngStream& stream) {
  const std::uint32_t mask = stream.flip_mask(ber);
  return std::bit_cast<float>(std::bit_cast<std::uint32_t>(value) ^ mask);
}

Matrix faulty_gemm(const Matrix& a, const Matrix& b, double ber, RngStream& stream, OpCounter& counter,
                   FaultTrace* trace) {
  const GemmShape s = gemm_shape(a, b);
  Matrix c = gemm(a, b, counter);
  const std::uint64_t ops_per_cell = 2 * s.k - 1;
  const std::uint64_t bits_per_cell = ops_per_cell * 32;
  const auto flips = stream.take_flips(static_cast<std::uint64_t>(s.m) * s.n * bits_per_cell, ber);

  if (trace) {
    trace->rows = s.m;
    trace->cols = s.n;
    trace->cell_flips.assign(s.m * s.n, 0);
    trace->total_flips = flips.size();
  }

  // Only cells that received a flip are recomputed; all others keep the
  // clean value, which is bit-identical to the sequential evaluation.
  std::vector<std::uint32_t> masks(ops_per_cell);
  for (std::size_t f = 0; f < flips.size();) {
    const std::uint64_t cell = flips[f] / bits_per_cell;
    std::fill(masks.begin(), masks.end(), 0u);
    std::uint32_t events = 0;
    for (; f < flips.size() && flips[f] / bits_per_cell == cell; ++f) {
      const std::uint64_t local = flips[f] - cell * bits_per_cell;
      masks[local / 32] |= 1u << (local % 32);
      ++events;
    }
    const std::size_t i = cell / s.n;
    const std::size_t j = cell % s.n;
    auto flip = [](float v, std::uint32_t m) { return std::bit_cast<float>(std::bit_cast<std::uint32_t>(v) ^ m); };
    float acc = flip(a(i, 0) * b(0, j), masks[0]);
    for (std::size_t p = 1; p < s.k; ++p) {
      const float prod = flip(a(i, p) * b(p, j), masks[2 * p - 1]);
      acc = flip(acc + prod, masks[2 * p]);
    }
    c(i, j) = acc;
    if (trace) trace->cell_flips[cell] = events;
  }
  return c;
}

Matrix inject_single(Matrix c, std::size_t r, std::size_t col, float delta) {
  c.at(r, col) += delta;
  return c;
}

}  // namespace approxabft
