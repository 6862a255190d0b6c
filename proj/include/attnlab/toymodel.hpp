// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rank-1 linear adapter on a frozen linear map:
//
//   f(x) = x (w_star + a^T b),   loss = 1/2 (f(x) - y)^2
//
// `a` plays the role of the query/key adapter and `b` the value adapter. One
// gradient step changes the output by
//
//   delta_f = -delta1 - delta2 + delta3
//   delta1  = eta_a |x|^2 U b^2
//   delta2  = eta_b (x.a)^2 U
//   delta3  = eta_a eta_b |x|^2 (x.a) U^2 b
//
// with U = f(x) - y and every quantity taken before the update.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab::toy {

struct ToyModelState {
  std::size_t n = 0;
  Vector w_star;
  Vector a;
  double b = 0.0;
  std::size_t step = 0;

  /// Validates a.size() == w_star.size() == n >= 1.
  void check() const;
};

struct ToyDatapoint {
  Vector x;
  double y = 0.0;
};

struct LrConfig {
  double eta_a = 0.0;
  double eta_b = 0.0;
  double base_a = 0.0;
  double base_b = 0.0;
  double c_a = 0.0;
  double c_b = 0.0;

  /// eta_a = base_a * n^c_a, eta_b = base_b * n^c_b.
  static LrConfig from_exponents(std::size_t n, double base_a, double c_a, double base_b,
                                 double c_b);
  /// Width-independent rates (exponents zero, bases equal to the rates).
  static LrConfig fixed(double eta_a, double eta_b);

  double lambda() const { return eta_b / eta_a; }
};

enum class InitKind { AZeroBGaussian, AGaussianBZero };

/// Initial variances. Exactly one of them is zero so a^T b starts at zero.
struct InitScheme {
  InitKind kind = InitKind::AGaussianBZero;
  double sigma_a_sq = 0.0;
  double sigma_b_sq = 0.0;

  /// AGaussianBZero: sigma_a^2 = base / n. AZeroBGaussian: sigma_b^2 = base.
  static InitScheme make(InitKind kind, std::size_t n, double base = 1.0);
};

const char* to_string(InitKind kind);
/// Accepts "a-gaussian" / "b-gaussian" (and the enum spellings).
InitKind parse_init_kind(const std::string& text);

struct StepDecomposition {
  std::size_t t = 0;
  double u_prev = 0.0;  // U_{t-1}
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double delta_f = 0.0;  // -delta1 - delta2 + delta3
  double f_prev = 0.0;
  double f_t = 0.0;
  // post-update parameters
  double xa_t = 0.0;
  double b_t = 0.0;
};

struct ToyGrads {
  Vector grad_a;
  double grad_b = 0.0;
};

double toy_forward(const ToyModelState& state, const ToyDatapoint& dp);
double toy_loss(const ToyModelState& state, const ToyDatapoint& dp);
ToyGrads toy_grads(const ToyModelState& state, const ToyDatapoint& dp);

/// One gradient-descent step on both parameters. Throws DivergedError if any
/// resulting value is non-finite or exceeds kDivergenceLimit in magnitude.
std::pair<ToyModelState, StepDecomposition> toy_step(const ToyModelState& state,
                                                     const ToyDatapoint& dp, const LrConfig& lr);

/// y ~ U[0.5, 2] is drawn first, then x_i = sqrt(3) * U[-1, 1] (unit second
/// moment per coordinate). Equal seeds give equal y and nested x prefixes
/// across widths.
ToyDatapoint make_datapoint(Rng& rng, std::size_t n);

/// Draws a and b from `scheme`; w_star is zero.
///
/// a ~ N(0, sigma_a^2 I) is sampled as its component along x plus an
/// independent orthogonal remainder. The along-x coordinate is the first
/// draw, so runs at different widths with the same seed share the same
/// standardized x.a_0 while a keeps its exact marginal distribution.
ToyModelState init_state(Rng& rng, const ToyDatapoint& dp, const InitScheme& scheme);

/// Datapoint and initial state come from two streams derived from `seed`.
std::vector<StepDecomposition> toy_run(std::size_t n, const InitScheme& scheme, const LrConfig& lr,
                                       std::uint64_t seed, std::size_t steps);

}  // namespace attnlab::toy
