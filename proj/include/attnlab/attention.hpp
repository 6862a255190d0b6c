// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-head softmax attention with hand-derived gradients, LoRA and prefix
// adapters, per-matrix learning rates, and a plain gradient-descent trainer.
//
//   out = softmax(x W_q W_k^T C^T / sqrt(d_out)) C W_v
//
// x is the 1 x d_in query, C the m x d_in context.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab::attention {

enum class Proj : std::size_t { Q = 0, K = 1, V = 2 };
inline constexpr std::array<Proj, 3> kAllProj{Proj::Q, Proj::K, Proj::V};
const char* to_string(Proj p);

struct AttentionWeights {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;

  static AttentionWeights zeros(std::size_t d_in, std::size_t d_out);
  /// Each matrix i.i.d. N(0, variance).
  static AttentionWeights gaussian(Rng& rng, std::size_t d_in, std::size_t d_out,
                                   double variance);

  std::size_t d_in() const { return w_q.rows(); }
  std::size_t d_out() const { return w_q.cols(); }
  /// All three matrices share one d_in x d_out shape.
  void check() const;

  Matrix& get(Proj p);
  const Matrix& get(Proj p) const;

  friend bool operator==(const AttentionWeights&, const AttentionWeights&) = default;
};

struct AttentionInput {
  Matrix context;  // m x d_in
  Vector query;    // d_in

  void check(std::size_t d_in) const;
};

Vector attn_forward(const AttentionWeights& w, const AttentionInput& in, bool scale_on = true);

/// Attention weights over the context rows (the softmax row).
Vector attention_probs(const AttentionWeights& w, const AttentionInput& in, bool scale_on = true);

struct AttentionGrads {
  Matrix grad_q;
  Matrix grad_k;
  Matrix grad_v;

  Matrix& get(Proj p);
  const Matrix& get(Proj p) const;
};

/// Gradients of upstream . attn_forward(w, in) with respect to W_q, W_k, W_v.
AttentionGrads attn_backward(const AttentionWeights& w, const AttentionInput& in,
                             std::span<const double> upstream, bool scale_on = true);

// --- LoRA -------------------------------------------------------------------

struct LoraAdapter {
  Matrix a;  // d_in x r
  Matrix b;  // r x d_out
  double scale = 1.0;
  Proj target = Proj::Q;

  std::size_t rank() const { return a.cols(); }
  /// scale * A * B, the effective weight update.
  Matrix delta() const;
};

/// A ~ N(0, 1/d_in), B = 0, so the adapter starts as an exact no-op.
LoraAdapter make_lora(Rng& rng, std::size_t d_in, std::size_t d_out, std::size_t rank,
                      double scale, Proj target);

/// h + s * (x A B).
Vector lora_forward(std::span<const double> base_out, std::span<const double> x,
                    const LoraAdapter& adapter);

// --- Prefix tuning ----------------------------------------------------------

struct PrefixAdapter {
  Matrix p_k;  // r x d_out
  Matrix p_v;  // r x d_out

  std::size_t r() const { return p_k.rows(); }
  void check(std::size_t d_out) const;
};

/// Unscaled attention over keys [P_k; C W_k] and values [P_v; C W_v].
Vector prefix_forward_direct(const AttentionWeights& w, const AttentionInput& in,
                             const PrefixAdapter& p);

struct PrefixInterpolation {
  Vector output;
  double alpha = 0.0;  // softmax mass on the prefixes
};

/// (1 - alpha) Attn(x W_q, C W_k, C W_v) + alpha Attn(x W_q, P_k, P_v),
/// both attentions unscaled. r = 0 gives alpha = 0.
PrefixInterpolation prefix_forward_interp(const AttentionWeights& w, const AttentionInput& in,
                                          const PrefixAdapter& p);

// --- Fine-tuning ------------------------------------------------------------

enum class PolicyKind { None, QV, QKV };

struct FinetunePolicy {
  std::array<bool, 3> tunable{};
  std::array<double, 3> eta{};

  /// W_k frozen; eta_Q = eta_qk, eta_V = eta_v.
  static FinetunePolicy qv(double eta_qk, double eta_v);
  /// eta_Q = eta_K = eta_qk.
  static FinetunePolicy qkv(double eta_qk, double eta_v);
  static FinetunePolicy frozen();
  static FinetunePolicy make(PolicyKind kind, double eta_qk, double eta_v);

  bool tunes(Proj p) const { return tunable[static_cast<std::size_t>(p)]; }
  double rate(Proj p) const { return eta[static_cast<std::size_t>(p)]; }
  double lambda() const { return eta[2] / eta[0]; }
};

PolicyKind parse_policy(const std::string& text);
const char* to_string(PolicyKind kind);

enum class TaskKind { Regression, TokenClass };
TaskKind parse_task_kind(const std::string& text);
const char* to_string(TaskKind kind);

struct TaskConfig {
  TaskKind kind = TaskKind::Regression;
  std::size_t m = 4;
  std::size_t d_in = 8;
  std::size_t d_out = 8;
  std::size_t n_samples = 32;
  std::uint64_t seed = 17;
  double query_noise = 0.3;  // x = C_j* + query_noise * N(0, I)
  double label_noise = 0.0;
};

struct TaskSample {
  AttentionInput input;
  Vector target;
  std::size_t planted_row = 0;  // argmax_j x . C_j
};

/// Context rows are N(0, I); the query is a noisy copy of one row. The label
/// is read off the context row most similar to the query:
///   regression:  target = C_j* T with a fixed teacher T ~ N(0, 1/d_in)
///   token-class: rows are tokens from a d_out-word vocabulary and the
///                target is the one-hot id of row j*
struct SyntheticTask {
  TaskConfig config;
  std::vector<TaskSample> samples;
};

SyntheticTask make_synthetic_task(const TaskConfig& config);

enum class InitMode { NearZero, PretrainedLike };
InitMode parse_init_mode(const std::string& text);
const char* to_string(InitMode mode);

struct LoraOptions {
  std::size_t rank = 2;
  double scale = 1.0;
};

struct TrainOptions {
  InitMode init = InitMode::PretrainedLike;
  std::size_t steps = 200;
  std::uint64_t seed = 1;
  bool scale_on = true;
  double near_zero_variance = 1e-4;  // times 1/d_in
  /// When set, base weights are frozen and one adapter per tunable matrix
  /// is trained instead.
  std::optional<LoraOptions> lora;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  std::array<double, 3> norm_delta{};  // ||W_t - W_0||_F per matrix (effective weights)
  std::array<double, 3> grad_norm{};   // ||dL/dW_t||_F per matrix, frozen or not
};

struct TrainTrace {
  std::vector<TraceRow> rows;  // step 0 (initial) .. steps
  std::array<double, 3> initial_norm{};
  AttentionWeights initial;
  AttentionWeights final;  // effective weights after the last step
};

/// Mean over samples of 1/2 ||out - target||^2.
double task_loss(const AttentionWeights& w, const SyntheticTask& task, bool scale_on = true);

/// Full-batch gradient descent. Throws DivergedError on non-finite or
/// > kDivergenceLimit values.
TrainTrace attn_train(const SyntheticTask& task, const FinetunePolicy& policy,
                      const TrainOptions& options);

/// First step whose ||W_t - W_0|| / (||W_0|| + 1e-12) exceeds tau.
std::optional<std::size_t> onset_step(const TrainTrace& trace, Proj p, double tau = 0.01);

}  // namespace attnlab::attention
