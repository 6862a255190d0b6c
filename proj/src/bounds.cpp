// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/bounds.hpp"

#include <cmath>
#include <string>

#include "attnlab/errors.hpp"

namespace attnlab::bounds {

namespace {

std::size_t dimension_sum(const std::vector<LayerShape>& layers) {
  std::size_t total = 0;
  for (const auto& [d_in, d_out] : layers) total += d_in + d_out;
  return total;
}

double bound_with(double coefficient, const BoundInputs& in) {
  in.check();
  const double r2 = in.r_subg * in.r_subg;
  const double inner = coefficient * r2 / static_cast<double>(in.n_samples) *
                       static_cast<double>(in.q_bits) * static_cast<double>(in.r) *
                       static_cast<double>(dimension_sum(in.layers));
  return std::sqrt(inner);
}

std::size_t matrix_types(attention::PolicyKind policy) {
  switch (policy) {
    case attention::PolicyKind::QV: return 2;
    case attention::PolicyKind::QKV: return 3;
    case attention::PolicyKind::None: break;
  }
  return 0;
}

}  // namespace

void BoundInputs::check() const {
  if (r == 0) throw DomainError("BoundInputs: r must be >= 1");
  if (q_bits == 0) throw DomainError("BoundInputs: q_bits must be >= 1");
  if (n_samples == 0) throw DomainError("BoundInputs: n_samples must be >= 1");
  if (!(r_subg > 0.0) || !std::isfinite(r_subg))
    throw DomainError("BoundInputs: r_subg must be finite and > 0");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].first == 0 || layers[i].second == 0)
      throw DomainError("BoundInputs: layer " + std::to_string(i) + " has a zero dimension");
  }
}

double bound_qv(const BoundInputs& in) { return bound_with(4.0, in); }

double bound_qkv(const BoundInputs& in) { return bound_with(6.0, in); }

double bound_for(attention::PolicyKind policy, const BoundInputs& in) {
  switch (policy) {
    case attention::PolicyKind::QV: return bound_qv(in);
    case attention::PolicyKind::QKV: return bound_qkv(in);
    case attention::PolicyKind::None: break;
  }
  in.check();
  return 0.0;
}

std::size_t param_count(attention::PolicyKind policy, const std::vector<LayerShape>& layers,
                        std::size_t r) {
  return matrix_types(policy) * r * dimension_sum(layers);
}

}  // namespace attnlab::bounds
