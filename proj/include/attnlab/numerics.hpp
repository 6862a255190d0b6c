// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices, a reproducible random stream, a stable softmax and
// a central-difference gradient oracle. Everything is double precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "attnlab/errors.hpp"

namespace attnlab {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  /// 1 x n matrix holding v.
  static Matrix row_vector(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * cols_, cols_};
  }
  std::span<double> data() noexcept { return entries_; }
  std::span<const double> data() const noexcept { return entries_; }

  Matrix transposed() const;
  double frobenius_norm() const;
  double max_abs() const;
  bool all_finite() const;
  bool is_zero() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);
  /// this += s * other
  Matrix& add_scaled(const Matrix& other, double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// Standard product; contraction over zero columns yields zeros.
Matrix matmul(const Matrix& a, const Matrix& b);
/// Row vector times matrix: v (len a.rows()) * a -> len a.cols().
Vector vecmat(std::span<const double> v, const Matrix& a);
/// Outer product u^T v as a |u| x |v| matrix.
Matrix outer(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double squared_norm(std::span<const double> v);
double max_abs_diff(std::span<const double> u, std::span<const double> v);

/// Numerically stable softmax (max-subtracted).
Vector softmax_row(std::span<const double> v);

/// Seeded random stream. The engine is mt19937_64, whose output sequence is
/// fixed by the standard; uniform and Gaussian draws are derived from raw
/// 64-bit words here rather than through <random> distributions, whose
/// algorithms are implementation-defined.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+box-muller";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::string_view algorithm() const noexcept { return kAlgorithm; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Independent child seed for stream `stream` of `seed` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// i.i.d. N(0, variance) entries; variance 0 yields exact zeros.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double variance);
Vector gaussian_vector(Rng& rng, std::size_t n, double variance);

using ScalarFn = std::function<double(const Matrix&)>;

/// Central differences (f(x + h e_ij) - f(x - h e_ij)) / 2h for every entry.
Matrix finite_diff_grad(const ScalarFn& f, const Matrix& at, double h);

/// max|g - ref| / max(max|g|, max|ref|, floor). Used for gradient checks.
double relative_error(const Matrix& g, const Matrix& ref, double floor = 1e-3);

}  // namespace attnlab
