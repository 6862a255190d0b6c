// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Generalization-bound calculator for quantized low-rank fine-tuning of the
// attention matrices.

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "attnlab/attention.hpp"

namespace attnlab::bounds {

using LayerShape = std::pair<std::size_t, std::size_t>;  // (d_in, d_out)

struct BoundInputs {
  std::size_t r = 1;          // adapter rank
  std::size_t q_bits = 1;     // bits per tuned parameter
  std::size_t n_samples = 1;  // N
  double r_subg = 1.0;        // sub-Gaussian constant R
  std::vector<LayerShape> layers;

  /// Throws DomainError naming the first non-positive input.
  void check() const;
};

/// sqrt(4 R^2 / N * q * r * sum(d_in + d_out)).
double bound_qv(const BoundInputs& in);
/// sqrt(6 R^2 / N * q * r * sum(d_in + d_out)).
double bound_qkv(const BoundInputs& in);

/// Dispatches on the policy; PolicyKind::None gives 0.
double bound_for(attention::PolicyKind policy, const BoundInputs& in);

/// LoRA parameters: (#tuned matrix types) * r * sum(d_in + d_out).
std::size_t param_count(attention::PolicyKind policy, const std::vector<LayerShape>& layers,
                        std::size_t r);

}  // namespace attnlab::bounds
