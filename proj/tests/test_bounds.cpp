// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "attnlab/bounds.hpp"

using namespace attnlab;
using namespace attnlab::bounds;
using attention::PolicyKind;

namespace {

double oracle(double coefficient, const BoundInputs& in) {
  double dims = 0.0;
  for (const auto& [a, b] : in.layers) dims += static_cast<double>(a) + static_cast<double>(b);
  return std::sqrt(coefficient * in.r_subg * in.r_subg / static_cast<double>(in.n_samples) *
                   static_cast<double>(in.q_bits) * static_cast<double>(in.r) * dims);
}

BoundInputs random_inputs(Rng& rng) {
  BoundInputs in;
  in.r = 1 + rng.index(64);
  in.q_bits = 1 + rng.index(32);
  in.n_samples = 1 + rng.index(1000000);
  in.r_subg = rng.uniform(0.01, 10.0);
  const std::size_t layers = 1 + rng.index(12);
  for (std::size_t i = 0; i < layers; ++i) in.layers.emplace_back(1 + rng.index(4096), 1 + rng.index(4096));
  return in;
}

}  // namespace

TEST_CASE("bound examples") {
  BoundInputs in{1, 1, 4, 1.0, {{1, 1}}};
  CHECK(bound_qv(in) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(bound_qkv(in) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));

  BoundInputs more = in;
  more.n_samples = 16;
  CHECK(bound_qv(more) == doctest::Approx(bound_qv(in) / 2.0).epsilon(1e-15));

  BoundInputs empty = in;
  empty.layers.clear();
  CHECK(bound_qv(empty) == 0.0);
  CHECK(bound_qkv(empty) == 0.0);

  BoundInputs doubled = in;
  doubled.r = 2;
  CHECK(bound_qkv(doubled) == doctest::Approx(bound_qkv(in) * std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("bounds match the closed form and the fixed coefficient ratio") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_inputs(rng);
    CHECK(bound_qv(in) == doctest::Approx(oracle(4.0, in)).epsilon(1e-14));
    CHECK(bound_qkv(in) == doctest::Approx(oracle(6.0, in)).epsilon(1e-14));
    CHECK(std::abs(bound_qkv(in) / bound_qv(in) - std::sqrt(1.5)) <= 1e-12);
  }
}

TEST_CASE("bounds are monotone in every input") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_inputs(rng);
    const double base = bound_qv(in);
    auto up = in;
    up.r += 1;
    CHECK(bound_qv(up) >= base);
    up = in;
    up.q_bits += 1;
    CHECK(bound_qv(up) >= base);
    up = in;
    up.r_subg *= 1.5;
    CHECK(bound_qv(up) >= base);
    up = in;
    up.layers[0].first += 1;
    CHECK(bound_qv(up) >= base);
    up = in;
    up.layers[0].second += 1;
    CHECK(bound_qkv(up) >= bound_qkv(in));
    up = in;
    up.n_samples += 1;
    CHECK(bound_qv(up) < base);
  }
}

TEST_CASE("bound input validation") {
  const BoundInputs ok{1, 1, 1, 1.0, {{2, 2}}};
  auto bad = ok;
  bad.r = 0;
  CHECK_THROWS_AS(bound_qv(bad), DomainError);
  bad = ok;
  bad.q_bits = 0;
  CHECK_THROWS_AS(bound_qkv(bad), DomainError);
  bad = ok;
  bad.n_samples = 0;
  CHECK_THROWS_AS(bound_qv(bad), DomainError);
  bad = ok;
  bad.r_subg = 0.0;
  CHECK_THROWS_AS(bound_qv(bad), DomainError);
  bad = ok;
  bad.layers = {{0, 3}};
  CHECK_THROWS_AS(bound_qv(bad), DomainError);
}

TEST_CASE("parameter counts") {
  const std::vector<LayerShape> one{{4, 4}};
  CHECK(param_count(PolicyKind::QKV, one, 2) == 48);
  CHECK(param_count(PolicyKind::QV, one, 2) == 32);
  CHECK(param_count(PolicyKind::QV, one, 0) == 0);
  CHECK(param_count(PolicyKind::None, one, 2) == 0);
  const std::vector<LayerShape> mixed{{768, 768}, {768, 3072}, {64, 8}};
  CHECK(3 * param_count(PolicyKind::QV, mixed, 8) == 2 * param_count(PolicyKind::QKV, mixed, 8));
}
