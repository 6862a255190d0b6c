// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "attnlab/numerics.hpp"

using namespace attnlab;

TEST_CASE("matmul examples") {
  const Matrix m = Matrix::from_rows({{1.5, -2.0}, {0.25, 7.0}});
  CHECK(matmul(Matrix::identity(2), m) == m);

  const Matrix prod = matmul(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{0}, {1}}));
  CHECK(prod == Matrix::from_rows({{2}, {4}}));

  const Matrix empty = matmul(Matrix(1, 0), Matrix(0, 1));
  CHECK(empty.rows() == 1);
  CHECK(empty.cols() == 1);
  CHECK(empty(0, 0) == 0.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(vecmat(Vector{1.0, 2.0}, Matrix(3, 1)), ShapeError);
  CHECK_THROWS_AS(dot(Vector{1.0}, Vector{1.0, 2.0}), ShapeError);
}

TEST_CASE("matmul agrees with a naive triple loop") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(5), k = 1 + rng.index(5), m = 1 + rng.index(5);
    const Matrix a = gaussian_matrix(rng, n, k, 1.0);
    const Matrix b = gaussian_matrix(rng, k, m, 1.0);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < k; ++l) s += a(i, l) * b(l, j);
        CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("softmax_row examples") {
  for (double c : {-3.0, 0.0, 12.5}) {
    const Vector p = softmax_row(Vector{c, c, c});
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  const Vector p = softmax_row(Vector{0.0, std::log(3.0)});
  CHECK(std::abs(p[0] - 0.25) <= 1e-15);
  CHECK(std::abs(p[1] - 0.75) <= 1e-15);

  const Vector big = softmax_row(Vector{1000.0, 0.0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  CHECK_THROWS_AS(softmax_row(Vector{}), ShapeError);
}

TEST_CASE("softmax_row sums to one and keeps the argmax") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector v = gaussian_vector(rng, 1 + rng.index(10), 25.0);
    const Vector p = softmax_row(v);
    double sum = 0.0;
    std::size_t arg_v = 0, arg_p = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum += p[i];
      if (v[i] > v[arg_v]) arg_v = i;
      if (p[i] > p[arg_p]) arg_p = i;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(arg_v == arg_p);
  }
}

TEST_CASE("gaussian_matrix") {
  Rng rng(5);
  CHECK(gaussian_matrix(rng, 3, 4, 0.0).is_zero());
  CHECK_THROWS_AS(gaussian_matrix(rng, 2, 2, -1.0), DomainError);

  Rng big(2024);
  const Matrix m = gaussian_matrix(big, 1000, 1000, 1.0);
  double sum = 0.0, sq = 0.0;
  for (double v : m.data()) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / 1e6;
  const double var = sq / 1e6 - mean * mean;
  CHECK(std::abs(var - 1.0) < 0.01);
  CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("Rng is reproducible and derive_seed separates streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng c(5489);
  for (int i = 0; i < 9999; ++i) c.next_u64();
  CHECK(c.next_u64() == 9981545732273789042ULL);  // the standard's mt19937_64 check value
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));

  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.index(7) < 7);
  }
}

TEST_CASE("finite_diff_grad recovers a quadratic gradient") {
  const Matrix q = Matrix::from_rows({{2.0, 0.5}, {-1.0, 3.0}});
  const ScalarFn f = [&](const Matrix& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += q.data()[i] * x.data()[i] * x.data()[i];
    return s;
  };
  const Matrix at = Matrix::from_rows({{0.3, -0.7}, {1.1, 0.0}});
  const Matrix g = finite_diff_grad(f, at, 1e-5);
  for (std::size_t i = 0; i < at.size(); ++i)
    CHECK(g.data()[i] == doctest::Approx(2.0 * q.data()[i] * at.data()[i]).epsilon(1e-8));
}

TEST_CASE("finite_diff_grad reports non-finite evaluations and bad steps") {
  const ScalarFn f = [](const Matrix& x) {
    return x(0, 1) > 0.5 ? std::numeric_limits<double>::infinity() : x(0, 0);
  };
  try {
    finite_diff_grad(f, Matrix::from_rows({{0.0, 0.5}}), 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.row() == 0);
    CHECK(e.col() == 1);
  }
  CHECK_THROWS_AS(finite_diff_grad(f, Matrix(1, 1), 0.0), DomainError);
}

TEST_CASE("relative_error uses the floor for tiny gradients") {
  const Matrix a = Matrix::from_rows({{1.0, 2.0}});
  const Matrix b = Matrix::from_rows({{1.0, 2.2}});
  CHECK(relative_error(a, b) == doctest::Approx(0.2 / 2.2));
  CHECK(relative_error(Matrix(1, 1, 1e-9), Matrix(1, 1)) == doctest::Approx(1e-6));
  CHECK_THROWS_AS(relative_error(Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST_CASE("matrix helpers") {
  Matrix m = Matrix::from_rows({{3.0, -4.0}});
  CHECK(m.frobenius_norm() == 5.0);
  CHECK(m.max_abs() == 4.0);
  CHECK(m.transposed().rows() == 2);
  m.add_scaled(Matrix::from_rows({{1.0, 1.0}}), 2.0);
  CHECK(m == Matrix::from_rows({{5.0, -2.0}}));
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
  CHECK(outer(Vector{1.0, 2.0}, Vector{3.0}) == Matrix::from_rows({{3.0}, {6.0}}));
  CHECK_THROWS_AS(Matrix(2, 2, Vector{1.0}), ShapeError);
}
