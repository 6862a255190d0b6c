// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/toymodel.hpp"

#include <cmath>
#include <string>

namespace attnlab::toy {

namespace {

void check_datapoint(const ToyModelState& state, const ToyDatapoint& dp) {
  state.check();
  if (dp.x.size() != state.n) {
    throw ShapeError("toy model: input of length " + std::to_string(dp.x.size()) +
                     " for width " + std::to_string(state.n));
  }
}

bool blown_up(double v) { return !std::isfinite(v) || std::abs(v) > kDivergenceLimit; }

}  // namespace

void ToyModelState::check() const {
  if (n == 0) throw ShapeError("toy model: width must be at least 1");
  if (a.size() != n || w_star.size() != n) {
    throw ShapeError("toy model: a/w_star lengths " + std::to_string(a.size()) + "/" +
                     std::to_string(w_star.size()) + " for width " + std::to_string(n));
  }
}

LrConfig LrConfig::from_exponents(std::size_t n, double base_a, double c_a, double base_b,
                                  double c_b) {
  if (!(base_a > 0.0) || !(base_b > 0.0)) throw DomainError("LrConfig: bases must be positive");
  const double width = static_cast<double>(n);
  LrConfig lr;
  lr.base_a = base_a;
  lr.base_b = base_b;
  lr.c_a = c_a;
  lr.c_b = c_b;
  lr.eta_a = base_a * std::pow(width, c_a);
  lr.eta_b = base_b * std::pow(width, c_b);
  return lr;
}

LrConfig LrConfig::fixed(double eta_a, double eta_b) {
  LrConfig lr;
  lr.eta_a = lr.base_a = eta_a;
  lr.eta_b = lr.base_b = eta_b;
  return lr;
}

InitScheme InitScheme::make(InitKind kind, std::size_t n, double base) {
  if (n == 0) throw ShapeError("InitScheme: width must be at least 1");
  if (!(base > 0.0)) throw DomainError("InitScheme: base variance must be positive");
  InitScheme s;
  s.kind = kind;
  if (kind == InitKind::AGaussianBZero) {
    s.sigma_a_sq = base / static_cast<double>(n);
  } else {
    s.sigma_b_sq = base;
  }
  return s;
}

const char* to_string(InitKind kind) {
  return kind == InitKind::AGaussianBZero ? "a-gaussian" : "b-gaussian";
}

InitKind parse_init_kind(const std::string& text) {
  if (text == "a-gaussian" || text == "AGaussianBZero") return InitKind::AGaussianBZero;
  if (text == "b-gaussian" || text == "AZeroBGaussian") return InitKind::AZeroBGaussian;
  throw DomainError("unknown init scheme '" + text + "' (expected a-gaussian or b-gaussian)");
}

double toy_forward(const ToyModelState& state, const ToyDatapoint& dp) {
  check_datapoint(state, dp);
  return dot(dp.x, state.w_star) + dot(dp.x, state.a) * state.b;
}

double toy_loss(const ToyModelState& state, const ToyDatapoint& dp) {
  const double u = toy_forward(state, dp) - dp.y;
  return 0.5 * u * u;
}

ToyGrads toy_grads(const ToyModelState& state, const ToyDatapoint& dp) {
  const double u = toy_forward(state, dp) - dp.y;
  ToyGrads g;
  g.grad_a.resize(state.n);
  const double coef = u * state.b;
  for (std::size_t i = 0; i < state.n; ++i) g.grad_a[i] = dp.x[i] * coef;
  g.grad_b = dot(dp.x, state.a) * u;
  return g;
}

std::pair<ToyModelState, StepDecomposition> toy_step(const ToyModelState& state,
                                                     const ToyDatapoint& dp, const LrConfig& lr) {
  if (!(lr.eta_a > 0.0) || !(lr.eta_b > 0.0) || !std::isfinite(lr.eta_a) ||
      !std::isfinite(lr.eta_b)) {
    throw DomainError("toy_step: learning rates must be finite and positive");
  }
  const double f_prev = toy_forward(state, dp);
  const double u = f_prev - dp.y;
  const double xx = squared_norm(dp.x);
  const double xa = dot(dp.x, state.a);
  const double b = state.b;

  StepDecomposition d;
  d.t = state.step + 1;
  d.u_prev = u;
  d.f_prev = f_prev;
  d.delta1 = lr.eta_a * xx * u * b * b;
  d.delta2 = lr.eta_b * xa * xa * u;
  d.delta3 = lr.eta_a * lr.eta_b * xx * xa * u * u * b;
  d.delta_f = -d.delta1 - d.delta2 + d.delta3;

  ToyModelState next = state;
  next.step = d.t;
  const double coef_a = lr.eta_a * u * b;
  for (std::size_t i = 0; i < state.n; ++i) next.a[i] = state.a[i] - coef_a * dp.x[i];
  next.b = b - lr.eta_b * xa * u;

  d.xa_t = dot(dp.x, next.a);
  d.b_t = next.b;
  d.f_t = toy_forward(next, dp);

  for (double v : {d.delta1, d.delta2, d.delta3, d.f_t, d.xa_t, d.b_t}) {
    if (blown_up(v)) {
      throw DivergedError("toy_step: diverged at step " + std::to_string(d.t), d.t);
    }
  }
  return {std::move(next), d};
}

ToyDatapoint make_datapoint(Rng& rng, std::size_t n) {
  ToyDatapoint dp;
  dp.y = rng.uniform(0.5, 2.0);
  dp.x.resize(n);
  const double spread = std::sqrt(3.0);
  for (double& v : dp.x) v = spread * rng.uniform(-1.0, 1.0);
  return dp;
}

ToyModelState init_state(Rng& rng, const ToyDatapoint& dp, const InitScheme& scheme) {
  if ((scheme.sigma_a_sq == 0.0) == (scheme.sigma_b_sq == 0.0)) {
    throw DomainError("init_state: exactly one of sigma_a^2, sigma_b^2 must be zero");
  }
  const std::size_t n = dp.x.size();
  if (n == 0) throw ShapeError("init_state: width must be at least 1");
  ToyModelState s;
  s.n = n;
  s.w_star.assign(n, 0.0);
  s.a.assign(n, 0.0);
  const double along = rng.normal();
  const double b_draw = rng.normal();
  if (scheme.sigma_a_sq > 0.0) {
    const double sd = std::sqrt(scheme.sigma_a_sq);
    const double x_norm = std::sqrt(squared_norm(dp.x));
    Vector rest = gaussian_vector(rng, n, scheme.sigma_a_sq);
    if (x_norm > 0.0) {
      const double proj = dot(rest, dp.x) / (x_norm * x_norm);
      for (std::size_t i = 0; i < n; ++i) {
        s.a[i] = rest[i] - proj * dp.x[i] + sd * along * dp.x[i] / x_norm;
      }
    } else {
      s.a = std::move(rest);
    }
  }
  s.b = scheme.sigma_b_sq > 0.0 ? std::sqrt(scheme.sigma_b_sq) * b_draw : 0.0;
  return s;
}

std::vector<StepDecomposition> toy_run(std::size_t n, const InitScheme& scheme, const LrConfig& lr,
                                       std::uint64_t seed, std::size_t steps) {
  if (steps == 0) throw DomainError("toy_run: steps must be at least 1");
  Rng data_rng(derive_seed(seed, 0));
  Rng init_rng(derive_seed(seed, 1));
  const ToyDatapoint dp = make_datapoint(data_rng, n);
  ToyModelState state = init_state(init_rng, dp, scheme);
  std::vector<StepDecomposition> trace;
  trace.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    auto [next, d] = toy_step(state, dp, lr);
    state = std::move(next);
    trace.push_back(d);
  }
  return trace;
}

}  // namespace attnlab::toy
