#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace approxabft {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Dense row-major single-precision matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);
  Matrix(std::initializer_list<std::initializer_list<float>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  /// Bounds-checked element access; throws IndexError.
  float& at(std::size_t r, std::size_t c);
  float at(std::size_t r, std::size_t c) const;

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  Matrix transposed() const;

  /// Columns [first, first + count) as a new matrix.
  Matrix col_slice(std::size_t first, std::size_t count) const;
  void set_col_slice(std::size_t first, const Matrix& src);

  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(float s);

  /// Bitwise equality of the float representations (NaN payloads included).
  bool bit_equal(const Matrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

Matrix operator+(Matrix a, const Matrix& b);

struct GemmShape {
  std::size_t m = 1;
  std::size_t k = 1;
  std::size_t n = 1;

  std::uint64_t macs() const { return static_cast<std::uint64_t>(m) * k * n; }
  bool operator==(const GemmShape&) const = default;
};

GemmShape gemm_shape(const Matrix& a, const Matrix& b);

/// Exact operation tallies, split between the protected workload and ABFT.
struct OpCounter {
  std::uint64_t workload_mults = 0;
  std::uint64_t workload_adds = 0;
  std::uint64_t abft_mults = 0;
  std::uint64_t abft_adds = 0;
  std::uint64_t abft_comparisons = 0;
  // Average-mode correction divides a row deviation among its candidates.
  std::uint64_t abft_divs = 0;

  OpCounter& operator+=(const OpCounter& o);
  bool operator==(const OpCounter&) const = default;
};

/// C = A * B. Each output element is accumulated in float with the inner
/// index ascending: c = a0*b0; c = c + a1*b1; ...
Matrix gemm(const Matrix& a, const Matrix& b, OpCounter& counter);

enum class Activation { softmax_rows, gelu, layernorm_rows };

struct LayerNormParams {
  std::vector<float> scale;
  std::vector<float> shift;
  float eps = 1e-5f;
};

Matrix softmax_rows(const Matrix& x);
float gelu(float x);
Matrix gelu(const Matrix& x);
Matrix layernorm_rows(const Matrix& x, const LayerNormParams& params);

/// Dispatching form; `ln` is required for layernorm_rows only.
Matrix apply_activation(const Matrix& x, Activation kind, const LayerNormParams* ln = nullptr);

// Double-precision sums. The counter overloads charge their additions to
// abft_adds.
std::vector<double> row_sums(const Matrix& x);
std::vector<double> col_sums(const Matrix& x);
double total_sum(const Matrix& x);
std::vector<double> row_sums(const Matrix& x, OpCounter& counter);
std::vector<double> col_sums(const Matrix& x, OpCounter& counter);
double total_sum(const Matrix& x, OpCounter& counter);

}  // namespace approxabft
