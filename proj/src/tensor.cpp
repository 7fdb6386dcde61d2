#include "approxabft/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace approxabft {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
  if (data_.size() != rows * cols) throw ShapeError("data length does not match rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<float>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  if (rows_ == 0 || cols_ == 0) throw ShapeError("matrix dimensions must be positive");
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

float& Matrix::at(std::size_t r, std::size_t c) {
  if (r >= rows_ || c >= cols_) throw IndexError("matrix index out of bounds");
  return (*this)(r, c);
}

float Matrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw IndexError("matrix index out of bounds");
  return (*this)(r, c);
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::col_slice(std::size_t first, std::size_t count) const {
  if (first + count > cols_ || count == 0) throw ShapeError("column slice out of range");
  Matrix out(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i)
    std::copy_n(data_.begin() + i * cols_ + first, count, out.data_.begin() + i * count);
  return out;
}

void Matrix::set_col_slice(std::size_t first, const Matrix& src) {
  if (src.rows_ != rows_ || first + src.cols_ > cols_) throw ShapeError("column slice out of range");
  for (std::size_t i = 0; i < rows_; ++i)
    std::copy_n(src.data_.begin() + i * src.cols_, src.cols_, data_.begin() + i * cols_ + first);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw ShapeError("elementwise add shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(float s) {
  for (float& v : data_) v *= s;
  return *this;
}

bool Matrix::bit_equal(const Matrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (std::bit_cast<std::uint32_t>(data_[i]) != std::bit_cast<std::uint32_t>(other.data_[i])) return false;
  return true;
}

Matrix operator+(Matrix a, const Matrix& b) {
  a += b;
  return a;
}

OpCounter& OpCounter::operator+=(const OpCounter& o) {
  workload_mults += o.workload_mults;
  workload_adds += o.workload_adds;
  abft_mults += o.abft_mults;
  abft_adds += o.abft_adds;
  abft_comparisons += o.abft_comparisons;
  abft_divs += o.abft_divs;
  return *this;
}

GemmShape gemm_shape(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("gemm: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  return {a.rows(), a.cols(), b.cols()};
}

Matrix gemm(const Matrix& a, const Matrix& b, OpCounter& counter) {
  const GemmShape s = gemm_shape(a, b);
  Matrix c(s.m, s.n);
  // i-p-j order keeps each element's accumulation k-ascending while letting
  // the j loop vectorize.
  for (std::size_t i = 0; i < s.m; ++i) {
    float* crow = c.row(i).data();
    const float* arow = a.row(i).data();
    const float* b0 = b.row(0).data();
    for (std::size_t j = 0; j < s.n; ++j) crow[j] = arow[0] * b0[j];
    for (std::size_t p = 1; p < s.k; ++p) {
      const float av = arow[p];
      const float* brow = b.row(p).data();
      for (std::size_t j = 0; j < s.n; ++j) crow[j] = crow[j] + av * brow[j];
    }
  }
  counter.workload_mults += s.macs();
  counter.workload_adds += static_cast<std::uint64_t>(s.m) * (s.k - 1) * s.n;
  return c;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    float mx = in[0];
    for (float v : in) mx = std::max(mx, v);
    double denom = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      const double e = std::exp(static_cast<double>(in[j]) - mx);
      o[j] = static_cast<float>(e);
      denom += e;
    }
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = static_cast<float>(o[j] / denom);
    // NaN anywhere in the row poisons it, matching the unstable formula.
    if (std::isnan(mx) || std::any_of(in.begin(), in.end(), [](float v) { return std::isnan(v); }))
      std::fill(o.begin(), o.end(), std::numeric_limits<float>::quiet_NaN());
  }
  return out;
}

float gelu(float x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + 0.044715 * v * v * v))));
}

Matrix gelu(const Matrix& x) {
  Matrix out = x;
  for (float& v : out.data()) v = gelu(v);
  return out;
}

Matrix layernorm_rows(const Matrix& x, const LayerNormParams& params) {
  if (params.scale.size() != x.cols() || params.shift.size() != x.cols())
    throw ShapeError("layernorm parameter length does not match row width");
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + params.eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j)
      o[j] = static_cast<float>((in[j] - mean) * inv * params.scale[j] + params.shift[j]);
  }
  return out;
}

Matrix apply_activation(const Matrix& x, Activation kind, const LayerNormParams* ln) {
  switch (kind) {
    case Activation::softmax_rows:
      return softmax_rows(x);
    case Activation::gelu:
      return gelu(x);
    case Activation::layernorm_rows:
      if (!ln) throw std::invalid_argument("layernorm requires parameters");
      return layernorm_rows(x, *ln);
  }
  throw std::invalid_argument("unknown activation");
}

std::vector<double> row_sums(const Matrix& x) {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (float v : x.row(i)) s += v;
    out[i] = s;
  }
  return out;
}

std::vector<double> col_sums(const Matrix& x) {
  std::vector<double> out(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += r[j];
  }
  return out;
}

double total_sum(const Matrix& x) {
  const auto rs = row_sums(x);
  return std::accumulate(rs.begin(), rs.end(), 0.0);
}

std::vector<double> row_sums(const Matrix& x, OpCounter& counter) {
  counter.abft_adds += static_cast<std::uint64_t>(x.rows()) * (x.cols() - 1);
  return row_sums(x);
}

std::vector<double> col_sums(const Matrix& x, OpCounter& counter) {
  counter.abft_adds += static_cast<std::uint64_t>(x.cols()) * (x.rows() - 1);
  return col_sums(x);
}

double total_sum(const Matrix& x, OpCounter& counter) {
  counter.abft_adds += static_cast<std::uint64_t>(x.rows()) * x.cols() - 1;
  return total_sum(x);
}

}  // namespace approxabft
