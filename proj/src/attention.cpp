// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace attnlab::attention {

namespace {

struct ForwardState {
  Vector q;       // x W_q
  Matrix keys;    // C W_k
  Matrix values;  // C W_v
  Vector probs;
  Vector out;
  double score_scale = 1.0;
};

ForwardState run_forward(const AttentionWeights& w, const AttentionInput& in, bool scale_on) {
  w.check();
  in.check(w.d_in());
  ForwardState s;
  s.score_scale = scale_on ? 1.0 / std::sqrt(static_cast<double>(w.d_out())) : 1.0;
  s.q = vecmat(in.query, w.w_q);
  s.keys = matmul(in.context, w.w_k);
  s.values = matmul(in.context, w.w_v);
  const std::size_t m = in.context.rows();
  Vector scores(m);
  for (std::size_t j = 0; j < m; ++j) scores[j] = s.score_scale * dot(s.q, s.keys.row(j));
  s.probs = softmax_row(scores);
  s.out = vecmat(s.probs, s.values);
  return s;
}

/// Softmax over the concatenation of two score lists, returned as one vector.
Vector joint_softmax(const Vector& first, const Vector& second) {
  Vector all(first);
  all.insert(all.end(), second.begin(), second.end());
  return softmax_row(all);
}

}  // namespace

const char* to_string(Proj p) {
  switch (p) {
    case Proj::Q: return "q";
    case Proj::K: return "k";
    case Proj::V: return "v";
  }
  return "?";
}

AttentionWeights AttentionWeights::zeros(std::size_t d_in, std::size_t d_out) {
  return {Matrix(d_in, d_out), Matrix(d_in, d_out), Matrix(d_in, d_out)};
}

AttentionWeights AttentionWeights::gaussian(Rng& rng, std::size_t d_in, std::size_t d_out,
                                            double variance) {
  AttentionWeights w;
  w.w_q = gaussian_matrix(rng, d_in, d_out, variance);
  w.w_k = gaussian_matrix(rng, d_in, d_out, variance);
  w.w_v = gaussian_matrix(rng, d_in, d_out, variance);
  return w;
}

void AttentionWeights::check() const {
  if (w_k.rows() != w_q.rows() || w_k.cols() != w_q.cols() || w_v.rows() != w_q.rows() ||
      w_v.cols() != w_q.cols()) {
    throw ShapeError("AttentionWeights: W_q, W_k, W_v must share one shape");
  }
  if (w_q.rows() == 0 || w_q.cols() == 0) throw ShapeError("AttentionWeights: empty matrices");
}

Matrix& AttentionWeights::get(Proj p) {
  switch (p) {
    case Proj::Q: return w_q;
    case Proj::K: return w_k;
    case Proj::V: break;
  }
  return w_v;
}

const Matrix& AttentionWeights::get(Proj p) const {
  return const_cast<AttentionWeights&>(*this).get(p);
}

void AttentionInput::check(std::size_t d_in) const {
  if (context.rows() == 0) throw ShapeError("AttentionInput: context must have m >= 1 rows");
  if (context.cols() != d_in || query.size() != d_in) {
    throw ShapeError("AttentionInput: expected width " + std::to_string(d_in) + ", got context " +
                     std::to_string(context.cols()) + " and query " +
                     std::to_string(query.size()));
  }
}

Vector attn_forward(const AttentionWeights& w, const AttentionInput& in, bool scale_on) {
  return run_forward(w, in, scale_on).out;
}

Vector attention_probs(const AttentionWeights& w, const AttentionInput& in, bool scale_on) {
  return run_forward(w, in, scale_on).probs;
}

Matrix& AttentionGrads::get(Proj p) {
  switch (p) {
    case Proj::Q: return grad_q;
    case Proj::K: return grad_k;
    case Proj::V: break;
  }
  return grad_v;
}

const Matrix& AttentionGrads::get(Proj p) const {
  return const_cast<AttentionGrads&>(*this).get(p);
}

AttentionGrads attn_backward(const AttentionWeights& w, const AttentionInput& in,
                             std::span<const double> upstream, bool scale_on) {
  const ForwardState s = run_forward(w, in, scale_on);
  if (upstream.size() != w.d_out()) {
    throw ShapeError("attn_backward: upstream has length " + std::to_string(upstream.size()) +
                     ", expected " + std::to_string(w.d_out()));
  }
  const std::size_t m = in.context.rows();

  // d out / d probs_j = upstream . V_j, then through the softmax Jacobian.
  Vector dprobs(m);
  double weighted = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    dprobs[j] = dot(upstream, s.values.row(j));
    weighted += s.probs[j] * dprobs[j];
  }
  Vector dscores(m);
  for (std::size_t j = 0; j < m; ++j) dscores[j] = s.probs[j] * (dprobs[j] - weighted);

  AttentionGrads g;
  g.grad_v = outer(vecmat(s.probs, in.context), upstream);

  Vector dq(w.d_out(), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double c = s.score_scale * dscores[j];
    auto key = s.keys.row(j);
    for (std::size_t k = 0; k < dq.size(); ++k) dq[k] += c * key[k];
  }
  g.grad_q = outer(in.query, dq);

  Vector scaled_q(s.q);
  for (double& v : scaled_q) v *= s.score_scale;
  g.grad_k = outer(vecmat(dscores, in.context), scaled_q);
  return g;
}

Matrix LoraAdapter::delta() const { return matmul(a, b) * scale; }

LoraAdapter make_lora(Rng& rng, std::size_t d_in, std::size_t d_out, std::size_t rank,
                      double scale, Proj target) {
  if (rank == 0) throw DomainError("make_lora: rank must be at least 1");
  if (!(scale >= 1.0)) throw DomainError("make_lora: scale must be >= 1");
  LoraAdapter ad;
  ad.a = gaussian_matrix(rng, d_in, rank, 1.0 / static_cast<double>(d_in));
  ad.b = Matrix(rank, d_out);
  ad.scale = scale;
  ad.target = target;
  return ad;
}

Vector lora_forward(std::span<const double> base_out, std::span<const double> x,
                    const LoraAdapter& adapter) {
  if (adapter.a.cols() != adapter.b.rows())
    throw ShapeError("lora_forward: A and B ranks disagree");
  if (base_out.size() != adapter.b.cols())
    throw ShapeError("lora_forward: base output width does not match B");
  const Vector update = vecmat(vecmat(x, adapter.a), adapter.b);
  Vector out(base_out.begin(), base_out.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += adapter.scale * update[i];
  return out;
}

void PrefixAdapter::check(std::size_t d_out) const {
  if (p_k.rows() != p_v.rows()) throw ShapeError("PrefixAdapter: P_k and P_v disagree on r");
  if (p_k.rows() > 0 && (p_k.cols() != d_out || p_v.cols() != d_out))
    throw ShapeError("PrefixAdapter: prefix width must equal d_out");
}

Vector prefix_forward_direct(const AttentionWeights& w, const AttentionInput& in,
                             const PrefixAdapter& p) {
  w.check();
  in.check(w.d_in());
  p.check(w.d_out());
  const Vector q = vecmat(in.query, w.w_q);
  const Matrix keys = matmul(in.context, w.w_k);
  const Matrix values = matmul(in.context, w.w_v);

  const std::size_t r = p.r();
  const std::size_t m = in.context.rows();
  Matrix all_keys(r + m, w.d_out());
  Matrix all_values(r + m, w.d_out());
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(p.p_k.row(i).begin(), w.d_out(), all_keys.row(i).begin());
    std::copy_n(p.p_v.row(i).begin(), w.d_out(), all_values.row(i).begin());
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::copy_n(keys.row(j).begin(), w.d_out(), all_keys.row(r + j).begin());
    std::copy_n(values.row(j).begin(), w.d_out(), all_values.row(r + j).begin());
  }
  Vector scores(r + m);
  for (std::size_t i = 0; i < r + m; ++i) scores[i] = dot(q, all_keys.row(i));
  return vecmat(softmax_row(scores), all_values);
}

PrefixInterpolation prefix_forward_interp(const AttentionWeights& w, const AttentionInput& in,
                                          const PrefixAdapter& p) {
  w.check();
  in.check(w.d_in());
  p.check(w.d_out());
  const Vector q = vecmat(in.query, w.w_q);
  const Matrix keys = matmul(in.context, w.w_k);
  const Matrix values = matmul(in.context, w.w_v);

  const std::size_t r = p.r();
  const std::size_t m = in.context.rows();
  Vector context_scores(m);
  for (std::size_t j = 0; j < m; ++j) context_scores[j] = dot(q, keys.row(j));

  PrefixInterpolation result;
  const Vector standard = vecmat(softmax_row(context_scores), values);
  if (r == 0) {
    result.output = standard;
    return result;
  }
  Vector prefix_scores(r);
  for (std::size_t i = 0; i < r; ++i) prefix_scores[i] = dot(q, p.p_k.row(i));

  // alpha = total softmax mass on the prefixes, evaluated with a shared shift.
  const Vector joint = joint_softmax(prefix_scores, context_scores);
  double alpha = 0.0;
  for (std::size_t i = 0; i < r; ++i) alpha += joint[i];
  result.alpha = alpha;

  const Vector from_prefix = vecmat(softmax_row(prefix_scores), p.p_v);
  result.output.resize(w.d_out());
  for (std::size_t k = 0; k < w.d_out(); ++k)
    result.output[k] = (1.0 - alpha) * standard[k] + alpha * from_prefix[k];
  return result;
}

FinetunePolicy FinetunePolicy::qv(double eta_qk, double eta_v) {
  return {{true, false, true}, {eta_qk, eta_qk, eta_v}};
}

FinetunePolicy FinetunePolicy::qkv(double eta_qk, double eta_v) {
  return {{true, true, true}, {eta_qk, eta_qk, eta_v}};
}

FinetunePolicy FinetunePolicy::frozen() { return {{false, false, false}, {0.0, 0.0, 0.0}}; }

FinetunePolicy FinetunePolicy::make(PolicyKind kind, double eta_qk, double eta_v) {
  switch (kind) {
    case PolicyKind::QV: return qv(eta_qk, eta_v);
    case PolicyKind::QKV: return qkv(eta_qk, eta_v);
    case PolicyKind::None: break;
  }
  return frozen();
}

PolicyKind parse_policy(const std::string& text) {
  if (text == "qv" || text == "QV") return PolicyKind::QV;
  if (text == "qkv" || text == "QKV") return PolicyKind::QKV;
  if (text == "none") return PolicyKind::None;
  throw DomainError("unknown policy '" + text + "' (expected qv, qkv or none)");
}

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::QV: return "QV";
    case PolicyKind::QKV: return "QKV";
    case PolicyKind::None: break;
  }
  return "none";
}

TaskKind parse_task_kind(const std::string& text) {
  if (text == "regression") return TaskKind::Regression;
  if (text == "token-class") return TaskKind::TokenClass;
  throw DomainError("unknown task kind '" + text + "' (expected regression or token-class)");
}

const char* to_string(TaskKind kind) {
  return kind == TaskKind::Regression ? "regression" : "token-class";
}

InitMode parse_init_mode(const std::string& text) {
  if (text == "near-zero") return InitMode::NearZero;
  if (text == "pretrained-like") return InitMode::PretrainedLike;
  throw DomainError("unknown init mode '" + text + "' (expected near-zero or pretrained-like)");
}

const char* to_string(InitMode mode) {
  return mode == InitMode::NearZero ? "near-zero" : "pretrained-like";
}

SyntheticTask make_synthetic_task(const TaskConfig& config) {
  if (config.m == 0 || config.d_in == 0 || config.d_out == 0)
    throw DomainError("make_synthetic_task: dimensions must be >= 1");
  if (config.query_noise < 0.0 || config.label_noise < 0.0)
    throw DomainError("make_synthetic_task: noise levels must be >= 0");

  Rng rng(config.seed);
  SyntheticTask task;
  task.config = config;

  const bool tokens = config.kind == TaskKind::TokenClass;
  const Matrix teacher =
      tokens ? Matrix() : gaussian_matrix(rng, config.d_in, config.d_out, 1.0 / config.d_in);
  const Matrix vocabulary = tokens ? gaussian_matrix(rng, config.d_out, config.d_in, 1.0) : Matrix();

  task.samples.reserve(config.n_samples);
  for (std::size_t s = 0; s < config.n_samples; ++s) {
    TaskSample sample;
    std::vector<std::size_t> token_ids(config.m);
    if (tokens) {
      sample.input.context = Matrix(config.m, config.d_in);
      for (std::size_t j = 0; j < config.m; ++j) {
        token_ids[j] = rng.index(config.d_out);
        std::copy_n(vocabulary.row(token_ids[j]).begin(), config.d_in,
                    sample.input.context.row(j).begin());
      }
    } else {
      sample.input.context = gaussian_matrix(rng, config.m, config.d_in, 1.0);
    }
    const std::size_t chosen = rng.index(config.m);
    sample.input.query.resize(config.d_in);
    for (std::size_t i = 0; i < config.d_in; ++i) {
      sample.input.query[i] =
          sample.input.context(chosen, i) + config.query_noise * rng.normal();
    }

    std::size_t best = 0;
    double best_score = dot(sample.input.query, sample.input.context.row(0));
    for (std::size_t j = 1; j < config.m; ++j) {
      const double score = dot(sample.input.query, sample.input.context.row(j));
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    sample.planted_row = best;

    if (tokens) {
      sample.target.assign(config.d_out, 0.0);
      sample.target[token_ids[best]] = 1.0;
    } else {
      sample.target = vecmat(sample.input.context.row(best), teacher);
    }
    if (config.label_noise > 0.0) {
      for (double& v : sample.target) v += config.label_noise * rng.normal();
    }
    task.samples.push_back(std::move(sample));
  }
  return task;
}

double task_loss(const AttentionWeights& w, const SyntheticTask& task, bool scale_on) {
  if (task.samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& sample : task.samples) {
    const Vector out = attn_forward(w, sample.input, scale_on);
    double sq = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) sq += (out[k] - sample.target[k]) * (out[k] - sample.target[k]);
    total += 0.5 * sq;
  }
  return total / static_cast<double>(task.samples.size());
}

namespace {

struct LossAndGrads {
  double loss = 0.0;
  AttentionGrads grads;
};

LossAndGrads batch_gradients(const AttentionWeights& w, const SyntheticTask& task, bool scale_on) {
  LossAndGrads r;
  r.grads = {Matrix(w.d_in(), w.d_out()), Matrix(w.d_in(), w.d_out()),
             Matrix(w.d_in(), w.d_out())};
  if (task.samples.empty()) return r;
  const double inv_n = 1.0 / static_cast<double>(task.samples.size());
  for (const auto& sample : task.samples) {
    const Vector out = attn_forward(w, sample.input, scale_on);
    Vector residual(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) residual[k] = out[k] - sample.target[k];
    r.loss += 0.5 * squared_norm(residual) * inv_n;
    for (double& v : residual) v *= inv_n;
    const AttentionGrads g = attn_backward(w, sample.input, residual, scale_on);
    for (Proj p : kAllProj) r.grads.get(p) += g.get(p);
  }
  return r;
}

bool out_of_bounds(const Matrix& m) {
  return !m.all_finite() || m.max_abs() > kDivergenceLimit;
}

}  // namespace

TrainTrace attn_train(const SyntheticTask& task, const FinetunePolicy& policy,
                      const TrainOptions& options) {
  const std::size_t d_in = task.config.d_in;
  const std::size_t d_out = task.config.d_out;
  for (Proj p : kAllProj) {
    if (policy.tunes(p) && !(policy.rate(p) > 0.0 && std::isfinite(policy.rate(p)))) {
      throw DomainError(std::string("attn_train: learning rate for W_") + to_string(p) +
                        " must be finite and positive");
    }
  }

  Rng weight_rng(derive_seed(options.seed, 0));
  Rng adapter_rng(derive_seed(options.seed, 1));
  const double variance = (options.init == InitMode::NearZero ? options.near_zero_variance : 1.0) /
                          static_cast<double>(d_in);
  AttentionWeights base = AttentionWeights::gaussian(weight_rng, d_in, d_out, variance);

  std::vector<LoraAdapter> adapters;
  if (options.lora) {
    for (Proj p : kAllProj) {
      if (policy.tunes(p))
        adapters.push_back(
            make_lora(adapter_rng, d_in, d_out, options.lora->rank, options.lora->scale, p));
    }
  }

  auto effective = [&]() {
    AttentionWeights eff = base;
    for (const auto& ad : adapters) eff.get(ad.target) += ad.delta();
    return eff;
  };

  TrainTrace trace;
  trace.initial = effective();
  for (Proj p : kAllProj)
    trace.initial_norm[static_cast<std::size_t>(p)] = trace.initial.get(p).frobenius_norm();
  trace.rows.reserve(options.steps + 1);

  AttentionWeights eff = trace.initial;
  for (std::size_t t = 0;; ++t) {
    LossAndGrads lg = batch_gradients(eff, task, options.scale_on);
    TraceRow row;
    row.step = t;
    row.loss = lg.loss;
    for (Proj p : kAllProj) {
      const auto i = static_cast<std::size_t>(p);
      row.norm_delta[i] = (eff.get(p) - trace.initial.get(p)).frobenius_norm();
      row.grad_norm[i] = lg.grads.get(p).frobenius_norm();
    }
    if (!std::isfinite(row.loss) || row.loss > kDivergenceLimit) {
      throw DivergedError("attn_train: loss diverged at step " + std::to_string(t), t);
    }
    trace.rows.push_back(row);
    if (t == options.steps) break;

    if (options.lora) {
      for (auto& ad : adapters) {
        const Matrix& g = lg.grads.get(ad.target);
        const double eta = policy.rate(ad.target);
        const Matrix grad_a = matmul(g, ad.b.transposed()) * ad.scale;
        const Matrix grad_b = matmul(ad.a.transposed(), g) * ad.scale;
        ad.a.add_scaled(grad_a, -eta);
        ad.b.add_scaled(grad_b, -eta);
      }
      eff = effective();
    } else {
      for (Proj p : kAllProj) {
        if (policy.tunes(p)) eff.get(p).add_scaled(lg.grads.get(p), -policy.rate(p));
      }
    }
    for (Proj p : kAllProj) {
      if (out_of_bounds(eff.get(p))) {
        throw DivergedError("attn_train: weights diverged at step " + std::to_string(t + 1),
                            t + 1);
      }
    }
  }
  trace.final = eff;
  return trace;
}

std::optional<std::size_t> onset_step(const TrainTrace& trace, Proj p, double tau) {
  const auto i = static_cast<std::size_t>(p);
  const double denom = trace.initial_norm[i] + 1e-12;
  for (const auto& row : trace.rows) {
    if (row.norm_delta[i] / denom > tau) return row.step;
  }
  return std::nullopt;
}

}  // namespace attnlab::attention
