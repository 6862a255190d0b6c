// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "attnlab/toymodel.hpp"

using namespace attnlab;
using namespace attnlab::toy;

namespace {

ToyModelState state_of(Vector a, double b, Vector w_star = {}) {
  ToyModelState s;
  s.n = a.size();
  s.w_star = w_star.empty() ? Vector(a.size(), 0.0) : std::move(w_star);
  s.a = std::move(a);
  s.b = b;
  return s;
}

}  // namespace

TEST_CASE("toy_step hand-computed example") {
  const ToyDatapoint dp{{1.0, 0.0}, 1.0};
  const auto [next, d] = toy_step(state_of({0.5, 0.0}, 0.0), dp, LrConfig::fixed(0.1, 0.2));
  CHECK(next.a == Vector{0.5, 0.0});
  CHECK(next.b == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(d.u_prev == -1.0);
  CHECK(d.delta1 == 0.0);
  CHECK(d.delta2 == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK(d.delta3 == 0.0);
  CHECK(d.delta_f == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(d.f_t == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(next.step == 1);
}

TEST_CASE("stuck at zero and perfect fit leave the state unchanged") {
  const ToyDatapoint dp{{0.3, -1.2, 0.8}, 1.5};
  const auto zero = state_of({0.0, 0.0, 0.0}, 0.0);
  const auto [z, dz] = toy_step(zero, dp, LrConfig::fixed(0.3, 0.3));
  CHECK(z.a == zero.a);
  CHECK(z.b == 0.0);
  CHECK(dz.delta1 == 0.0);
  CHECK(dz.delta2 == 0.0);
  CHECK(dz.delta3 == 0.0);

  // x.a = 1, b = 1.5, so f = y.
  const auto fit = state_of({1.0, 0.0, 0.0}, 1.5);
  const ToyDatapoint unit{{1.0, 0.0, 0.0}, 1.5};
  const auto [same, d] = toy_step(fit, unit, LrConfig::fixed(0.3, 0.3));
  CHECK(d.u_prev == 0.0);
  CHECK(same.a == fit.a);
  CHECK(same.b == fit.b);
  CHECK(d.delta1 == 0.0);
  CHECK(d.delta2 == 0.0);
  CHECK(d.delta3 == 0.0);
}

TEST_CASE("toy_step validates inputs and detects divergence") {
  const ToyDatapoint dp{{1.0}, 1.0};
  CHECK_THROWS_AS(toy_step(state_of({1.0}, 1.0), dp, LrConfig::fixed(0.0, 0.1)), DomainError);
  CHECK_THROWS_AS(toy_step(state_of({1.0}, 1.0), dp, LrConfig::fixed(0.1, -1.0)), DomainError);
  CHECK_THROWS_AS(toy_step(state_of({1.0, 2.0}, 1.0), dp, LrConfig::fixed(0.1, 0.1)), ShapeError);

  auto s = state_of({1.0}, 1.0);
  const ToyDatapoint far{{1.0}, 5.0};
  bool diverged = false;
  for (int t = 0; t < 200 && !diverged; ++t) {
    try {
      s = toy_step(s, far, LrConfig::fixed(50.0, 50.0)).first;
    } catch (const DivergedError& e) {
      diverged = true;
      CHECK(e.step() == s.step + 1);
    }
  }
  CHECK(diverged);
}

TEST_CASE("decomposition identity holds along random trajectories") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.index(200);
    const auto kind = trial % 2 ? InitKind::AGaussianBZero : InitKind::AZeroBGaussian;
    const auto lr = LrConfig::fixed(rng.uniform(0.01, 0.3) / n, rng.uniform(0.01, 0.3));
    const auto run = toy_run(n, InitScheme::make(kind, n), lr, rng.next_u64(), 30);
    REQUIRE(run.size() == 30);
    for (const auto& d : run) {
      CHECK(std::abs((d.f_t - d.f_prev) - d.delta_f) <= 1e-12 * std::max(1.0, std::abs(d.delta_f)));
      CHECK(d.delta_f == -d.delta1 - d.delta2 + d.delta3);
    }
  }
}

TEST_CASE("toy_grads agrees with central differences") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    ToyModelState s = state_of(gaussian_vector(rng, n, 1.0), rng.normal(),
                               gaussian_vector(rng, n, 0.5));
    const ToyDatapoint dp{gaussian_vector(rng, n, 1.0), rng.uniform(-2.0, 2.0)};
    Matrix packed(1, n + 1);
    for (std::size_t i = 0; i < n; ++i) packed(0, i) = s.a[i];
    packed(0, n) = s.b;
    const ScalarFn loss = [&](const Matrix& m) {
      ToyModelState probe = s;
      for (std::size_t i = 0; i < n; ++i) probe.a[i] = m(0, i);
      probe.b = m(0, n);
      return toy_loss(probe, dp);
    };
    const auto g = toy_grads(s, dp);
    Matrix analytic(1, n + 1);
    for (std::size_t i = 0; i < n; ++i) analytic(0, i) = g.grad_a[i];
    analytic(0, n) = g.grad_b;
    CHECK(relative_error(analytic, finite_diff_grad(loss, packed, 1e-6)) <= 1e-6);
  }
}

TEST_CASE("w_star shifts the target and is never mutated") {
  Rng rng(21);
  const std::size_t n = 6;
  const Vector w_star = gaussian_vector(rng, n, 1.0);
  const ToyDatapoint dp{gaussian_vector(rng, n, 1.0), 1.3};
  const ToyDatapoint shifted{dp.x, dp.y - dot(dp.x, w_star)};
  auto with = state_of(gaussian_vector(rng, n, 0.2), 0.0, w_star);
  auto without = state_of(with.a, 0.0);
  const auto lr = LrConfig::fixed(0.05, 0.1);
  for (int t = 0; t < 20; ++t) {
    with = toy_step(with, dp, lr).first;
    without = toy_step(without, shifted, lr).first;
    CHECK(with.w_star == w_star);
  }
  for (std::size_t i = 0; i < n; ++i) CHECK(with.a[i] == doctest::Approx(without.a[i]).epsilon(1e-12));
  CHECK(with.b == doctest::Approx(without.b).epsilon(1e-12));
}

TEST_CASE("first step of each init scheme") {
  const std::size_t n = 32;
  const auto lr = LrConfig::fixed(0.1 / n, 0.1);
  const auto a_run = toy_run(n, InitScheme::make(InitKind::AGaussianBZero, n), lr, 3, 1);
  CHECK(a_run[0].delta1 == 0.0);
  CHECK(a_run[0].delta3 == 0.0);
  CHECK(a_run[0].delta2 != 0.0);

  const auto b_run = toy_run(n, InitScheme::make(InitKind::AZeroBGaussian, n), lr, 3, 1);
  CHECK(b_run[0].delta2 == 0.0);
  CHECK(b_run[0].delta3 == 0.0);
  CHECK(b_run[0].delta1 != 0.0);
}

TEST_CASE("toy_run is deterministic and validates steps") {
  const std::size_t n = 64;
  const auto scheme = InitScheme::make(InitKind::AGaussianBZero, n);
  const auto lr = LrConfig::from_exponents(n, 0.5, -1.0, 0.5, 0.0);
  const auto first = toy_run(n, scheme, lr, 9, 10);
  const auto second = toy_run(n, scheme, lr, 9, 10);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].f_t == second[i].f_t);
    CHECK(first[i].delta1 == second[i].delta1);
  }
  CHECK_THROWS_AS(toy_run(n, scheme, lr, 9, 0), DomainError);
}

TEST_CASE("datapoint and init draws") {
  Rng rng(4);
  const auto dp = make_datapoint(rng, 1000);
  CHECK(dp.y >= 0.5);
  CHECK(dp.y <= 2.0);
  CHECK(squared_norm(dp.x) / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
  for (double v : dp.x) CHECK(std::abs(v) <= std::sqrt(3.0));

  const auto s = init_state(rng, dp, InitScheme::make(InitKind::AZeroBGaussian, 1000));
  CHECK(squared_norm(s.a) == 0.0);
  CHECK(s.b != 0.0);

  InitScheme both{InitKind::AGaussianBZero, 1.0, 1.0};
  CHECK_THROWS_AS(init_state(rng, dp, both), DomainError);
  CHECK(parse_init_kind("a-gaussian") == InitKind::AGaussianBZero);
  CHECK(parse_init_kind("b-gaussian") == InitKind::AZeroBGaussian);
  CHECK_THROWS_AS(parse_init_kind("c-gaussian"), DomainError);
}

TEST_CASE("a-gaussian init has the requested variance") {
  // a's marginal is N(0, sigma^2 I) even though it is drawn via its x component.
  Rng rng(31);
  const std::size_t n = 50;
  double sq = 0.0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const auto dp = make_datapoint(rng, n);
    const auto s = init_state(rng, dp, InitScheme::make(InitKind::AGaussianBZero, n, 2.0));
    sq += squared_norm(s.a);
  }
  CHECK(sq / reps == doctest::Approx(2.0).epsilon(0.05));
}
