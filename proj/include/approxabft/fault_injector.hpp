#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "approxabft/tensor.hpp"

namespace approxabft {

/// Stable 64-bit identifier for a GEMM node name (FNV-1a).
std::uint64_t gemm_key(std::string_view gemm_id);

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t gemm = 0;
  std::uint64_t trial = 0;
};

/// Counter-based source of bit flips.
///
/// The stream models an infinite sequence of bit positions, each flipped
/// independently with probability `ber`. Positions are consumed in order;
/// flip positions are found by drawing geometric gaps from uniforms
/// u_i = mix(key, i), so a stream is a pure function of its key and the
/// sequence of consumption calls. A stream can also be scripted with an
/// explicit list of flip positions.
class RngStream {
 public:
  explicit RngStream(StreamKey key);
  static RngStream scripted(std::vector<std::uint64_t> flip_positions);

  /// Consumes 32 positions and returns the flip mask (bit b = position cursor+b).
  std::uint32_t flip_mask(double ber);

  /// Consumes `count` positions and returns the offsets (relative to the
  /// current cursor) of every flip among them, ascending.
  std::vector<std::uint64_t> take_flips(std::uint64_t count, double ber);

  std::uint64_t cursor() const { return cursor_; }
  std::uint64_t draws() const { return draws_; }

 private:
  RngStream() = default;
  double next_uniform();
  std::uint64_t next_flip(double ber);

  static constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

  std::uint64_t base_ = 0;
  std::uint64_t draws_ = 0;
  std::uint64_t cursor_ = 0;
  std::uint64_t pending_ = kNever;  // absolute position of the next flip
  double pending_ber_ = -1.0;
  bool scripted_ = false;
  std::vector<std::uint64_t> script_;
  std::size_t script_pos_ = 0;
};

/// Additive error applied to a GEMM output after it is computed.
struct ForcedFault {
  std::string gemm_id;
  std::size_t row = 0;
  std::size_t col = 0;
  float delta = 0.0f;
};

struct FaultConfig {
  double ber = 0.0;
  std::uint64_t seed = 0;
  /// GEMM ids subject to injection; empty means every GEMM.
  std::set<std::string> scope;
  std::vector<ForcedFault> forced;

  bool in_scope(const std::string& gemm_id) const { return scope.empty() || scope.count(gemm_id) > 0; }
  void validate() const;
};

/// Flips each of the 32 bits of `value` independently with probability ber.
float flip_bits(float value, double ber, RngStream& stream);

/// Ground truth recorded while injecting: flip events per output cell.
struct FaultTrace {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> cell_flips;
  std::uint64_t total_flips = 0;

  std::uint32_t flips(std::size_t r, std::size_t c) const { return cell_flips[r * cols + c]; }
};

/// GEMM whose every multiply output and accumulate-add output passes through
/// flip_bits. Primitive operations are visited cell by cell (row-major); a
/// cell of inner size k issues mul_0, mul_1, add_1, ..., mul_{k-1}, add_{k-1},
/// each consuming 32 stream positions (bit 0 first).
Matrix faulty_gemm(const Matrix& a, const Matrix& b, double ber, RngStream& stream, OpCounter& counter,
                   FaultTrace* trace = nullptr);

/// Returns C with C[r,c] += delta. Throws IndexError when out of bounds.
Matrix inject_single(Matrix c, std::size_t r, std::size_t col, float delta);

}  // namespace approxabft
