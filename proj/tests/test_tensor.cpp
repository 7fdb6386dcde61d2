#include <bit>
#include <cmath>
#include <random>

#include "approxabft/tensor.hpp"
#include "doctest.h"

using namespace approxabft;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Matrix m(r, c);
  for (float& v : m.data()) v = u(rng);
  return m;
}

// Textbook triple loop, j-outer, k ascending.
Matrix oracle_gemm(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float acc = a(i, 0) * b(0, j);
      for (std::size_t p = 1; p < a.cols(); ++p) acc = acc + a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("matrix construction validates shape") {
  CHECK_THROWS_AS(Matrix(0, 3), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<float>(3)), ShapeError);
  Matrix m(2, 3);
  CHECK(m.size() == 6);
  CHECK_THROWS_AS(m.at(2, 0), IndexError);
}

TEST_CASE("gemm worked examples") {
  OpCounter counter;
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{5, 6}, {7, 8}};
  Matrix c = gemm(a, b, counter);
  CHECK(c.bit_equal(Matrix{{19, 22}, {43, 50}}));

  std::mt19937_64 rng(7);
  Matrix x = random_matrix(3, 3, rng);
  CHECK(gemm(x, Matrix::identity(3), counter).bit_equal(x));
  CHECK(gemm(x, Matrix(3, 4), counter).bit_equal(Matrix(3, 4)));

  CHECK_THROWS_AS(gemm(Matrix(2, 3), Matrix(2, 3), counter), ShapeError);
}

TEST_CASE("gemm matches the triple-loop oracle bit for bit") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
    OpCounter counter;
    Matrix c = gemm(a, b, counter);
    REQUIRE(c.bit_equal(oracle_gemm(a, b)));
    CHECK(counter.workload_mults == m * k * n);
    CHECK(counter.workload_adds == m * (k - 1) * n);
    CHECK(counter.abft_mults == 0);
  }
}

TEST_CASE("gemm is bilinear within round-off") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = random_matrix(8, 8, rng), b1 = random_matrix(8, 8, rng), b2 = random_matrix(8, 8, rng);
    OpCounter counter;
    Matrix lhs = gemm(a, b1 + b2, counter);
    Matrix rhs = gemm(a, b1, counter) + gemm(a, b2, counter);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const float l = lhs.data()[i], r = rhs.data()[i];
      CHECK(std::abs(l - r) <= 1e-4f * std::max(1.0f, std::abs(r)));
    }
  }
}

TEST_CASE("softmax rows") {
  Matrix x(1, 4, 2.5f);
  Matrix s = softmax_rows(x);
  for (float v : s.data()) CHECK(v == doctest::Approx(0.25f));

  std::mt19937_64 rng(5);
  Matrix r = random_matrix(6, 17, rng);
  r *= 30.0f;
  Matrix p = softmax_rows(r);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (float v : p.row(i)) {
      CHECK(v >= 0.0f);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("softmax propagates NaN") {
  Matrix x{{1.0f, std::nanf(""), 0.0f}, {0.0f, 0.0f, 0.0f}};
  Matrix s = softmax_rows(x);
  CHECK(std::isnan(s(0, 0)));
  CHECK(s(1, 0) == doctest::Approx(1.0f / 3));
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0f) == 0.0f);
  CHECK(gelu(1.0f) == doctest::Approx(0.841192f).epsilon(1e-5));
  CHECK(gelu(-10.0f) == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(gelu(10.0f) == doctest::Approx(10.0f));
}

TEST_CASE("layernorm rows") {
  LayerNormParams ln{std::vector<float>(3, 1.0f), std::vector<float>(3, 0.0f)};
  Matrix y = layernorm_rows(Matrix{{1, 2, 3}}, ln);
  double mean = 0, var = 0;
  for (float v : y.data()) mean += v;
  mean /= 3;
  for (float v : y.data()) var += (v - mean) * (v - mean);
  var /= 3;
  CHECK(std::abs(mean) <= 1e-5);
  CHECK(std::abs(var - 1.0) <= 1e-4);  // eps in the denominator

  LayerNormParams affine{{2.0f, 2.0f, 2.0f}, {1.0f, 1.0f, 1.0f}};
  Matrix z = layernorm_rows(Matrix{{1, 2, 3}}, affine);
  CHECK(z(0, 1) == doctest::Approx(1.0f));

  CHECK_THROWS_AS(layernorm_rows(Matrix(1, 4), ln), ShapeError);

  std::mt19937_64 rng(9);
  LayerNormParams wide{std::vector<float>(32, 1.0f), std::vector<float>(32, 0.0f)};
  Matrix r = random_matrix(16, 32, rng);
  Matrix n = apply_activation(r, Activation::layernorm_rows, &wide);
  for (std::size_t i = 0; i < n.rows(); ++i) {
    double m = 0;
    for (float v : n.row(i)) m += v;
    CHECK(std::abs(m / 32) <= 1e-5);
  }
}

TEST_CASE("row, column and total sums") {
  Matrix x{{19, 22}, {43, 50}};
  CHECK(row_sums(x) == std::vector<double>{41, 93});
  CHECK(col_sums(x) == std::vector<double>{62, 72});
  CHECK(total_sum(x) == 134);

  CHECK(total_sum(Matrix(3, 5)) == 0.0);
  CHECK(row_sums(Matrix(1, 1, 4.5f)) == std::vector<double>{4.5});
  CHECK(col_sums(Matrix(1, 1, 4.5f)) == std::vector<double>{4.5});

  OpCounter counter;
  total_sum(Matrix(4, 6), counter);
  CHECK(counter.abft_adds == 23);
  row_sums(Matrix(4, 6), counter);
  CHECK(counter.abft_adds == 23 + 20);
  col_sums(Matrix(4, 6), counter);
  CHECK(counter.abft_adds == 23 + 20 + 18);
}

TEST_CASE("sum conservation on random matrices") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    Matrix x = random_matrix(1 + rng() % 30, 1 + rng() % 30, rng);
    double rs = 0, cs = 0;
    for (double v : row_sums(x)) rs += v;
    for (double v : col_sums(x)) cs += v;
    CHECK(total_sum(x) == rs);
    CHECK(std::abs(cs - rs) <= 1e-12 * std::max(1.0, std::abs(rs)) + 1e-12);
  }
}

TEST_CASE("counters merge componentwise") {
  OpCounter a{1, 2, 3, 4, 5, 6};
  OpCounter b{10, 20, 30, 40, 50, 60};
  a += b;
  CHECK(a == OpCounter{11, 22, 33, 44, 55, 66});
}
