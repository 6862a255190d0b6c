// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "attnlab/errors.hpp"
#include "attnlab/parallel.hpp"
#include "attnlab/toymodel.hpp"

namespace attnlab::harness {

using attention::Proj;

namespace {

std::string term_verdict(int term, double exponent, double tolerance) {
  using Kind = scaling::EfficiencyVerdict::Kind;
  scaling::EfficiencyVerdict v;
  if (std::isnan(exponent)) return "unfitted";
  if (std::abs(exponent) > tolerance) {
    v.kind = exponent > 0 ? Kind::ExplodingUpdate : Kind::VanishingUpdate;
    v.term = term;
    v.exponent = exponent;
  }
  return v.to_string();
}

std::string opt_step(const std::optional<std::size_t>& step) {
  return step ? std::to_string(*step) : "none";
}

}  // namespace

// --- toy-scan ---------------------------------------------------------------

scaling::ScanConfig scan_config(const ExperimentConfig& config) {
  scaling::ScanConfig s;
  s.c_a = config.c_a;
  s.c_b = config.c_b;
  s.init = config.init_scheme;
  s.widths = config.widths;
  s.probe_step = config.probe_step;
  s.seeds = config.seeds;
  s.base_a = config.base_a;
  s.base_b = config.base_b;
  s.base_init = config.base_init;
  s.workers = config.workers;
  return s;
}

CsvWriter scan_csv(const scaling::ScanReport& report) {
  CsvWriter csv({"quantity", "width", "seed", "magnitude"});
  for (const char* base : scaling::kScanQuantities) {
    const std::string name = scaling::probe_name(base, report.config.probe_step);
    for (const auto& sample : report.samples) {
      csv.add_row({name, std::to_string(sample.width), std::to_string(sample.seed),
                   sample.diverged ? "nan"
                                   : format_double(scaling::probe_magnitude(sample.probe, base))});
    }
  }
  return csv;
}

CsvWriter scan_fit_csv(const scaling::ScanReport& report) {
  CsvWriter csv({"quantity", "exponent_empirical", "exponent_symbolic", "r_squared", "verdict"});
  for (std::size_t i = 0; i < report.agreement.size(); ++i) {
    const auto& q = report.agreement[i];
    std::string verdict = "-";
    if (i < 3) verdict = term_verdict(static_cast<int>(i) + 1, q.exponent_empirical, 0.1);
    csv.add_row({q.quantity, format_double(q.exponent_empirical),
                 format_double(q.exponent_symbolic), q.fitted ? format_double(q.r_squared) : "nan",
                 verdict});
  }
  csv.add_row({"scan", "", "", "", report.verdict.to_string()});
  return csv;
}

// --- lambda sweep -----------------------------------------------------------

attention::TrainOptions train_options(const ExperimentConfig& config, std::uint64_t seed) {
  attention::TrainOptions o;
  o.init = config.init;
  o.steps = config.steps;
  o.seed = seed;
  o.scale_on = config.scale_on;
  o.near_zero_variance = config.near_zero_variance;
  if (config.lora_rank > 0) o.lora = attention::LoraOptions{config.lora_rank, config.lora_scale};
  return o;
}

SweepResult lambda_sweep(const ExperimentConfig& config) {
  config.validate();
  SweepResult result;
  result.eta_qk_axis = config.eta_qk_grid;
  result.second_axis_is_lambda = config.eta_v_grid.empty();
  result.second_axis = result.second_axis_is_lambda ? config.lambdas : config.eta_v_grid;
  result.seeds = config.seeds;

  for (double eta_qk : result.eta_qk_axis) {
    for (double second : result.second_axis) {
      SweepCell cell;
      cell.eta_qk = eta_qk;
      cell.eta_v = result.second_axis_is_lambda ? second * eta_qk : second;
      cell.lambda = result.second_axis_is_lambda ? second : cell.eta_v / eta_qk;
      cell.final_loss.resize(config.seeds.size());
      result.cells.push_back(std::move(cell));
    }
  }

  const attention::SyntheticTask task = attention::make_synthetic_task(config.task);
  const std::size_t n_seeds = config.seeds.size();
  parallel_for(result.cells.size() * n_seeds, config.workers, [&](std::size_t idx) {
    SweepCell& cell = result.cells[idx / n_seeds];
    const std::size_t s = idx % n_seeds;
    const auto policy = attention::FinetunePolicy::qv(cell.eta_qk, cell.eta_v);
    try {
      const auto trace = attention::attn_train(task, policy, train_options(config, config.seeds[s]));
      cell.final_loss[s] = trace.rows.back().loss;
    } catch (const DivergedError&) {
      cell.final_loss[s] = std::nullopt;
    }
  });

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    SweepCell& cell = result.cells[c];
    double total = 0.0;
    for (const auto& loss : cell.final_loss) {
      if (loss) {
        total += *loss;
      } else {
        ++cell.diverged;
      }
    }
    if (cell.diverged == 0) {
      cell.mean_loss = total / static_cast<double>(n_seeds);
      if (!result.best || *cell.mean_loss < *result.cells[*result.best].mean_loss) result.best = c;
    }
  }
  return result;
}

CsvWriter sweep_csv(const SweepResult& result) {
  CsvWriter csv({"eta_qk", "eta_v", "lambda", "seed", "final_loss", "diverged"});
  for (const auto& cell : result.cells) {
    for (std::size_t s = 0; s < result.seeds.size(); ++s) {
      csv.add_row({format_double(cell.eta_qk), format_double(cell.eta_v),
                   format_double(cell.lambda), std::to_string(result.seeds[s]),
                   format_optional(cell.final_loss[s]), cell.final_loss[s] ? "0" : "1"});
    }
  }
  return csv;
}

// --- two-stage --------------------------------------------------------------

TwoStageResult two_stage(const ExperimentConfig& config) {
  config.validate();
  const attention::SyntheticTask task = attention::make_synthetic_task(config.task);
  const auto policy = attention::FinetunePolicy::make(config.policy, config.eta_qk, config.eta_v);

  TwoStageResult result;
  result.onsets.resize(config.seeds.size());
  result.traces.resize(config.seeds.size());
  parallel_for(config.seeds.size(), config.workers, [&](std::size_t s) {
    OnsetRecord& rec = result.onsets[s];
    rec.seed = config.seeds[s];
    try {
      result.traces[s] = attention::attn_train(task, policy, train_options(config, rec.seed));
    } catch (const DivergedError& e) {
      rec.diverged_step = e.step();
      return;
    }
    for (Proj p : attention::kAllProj)
      rec.onset[static_cast<std::size_t>(p)] = attention::onset_step(result.traces[s], p, config.tau);
    const auto& v = rec.onset[2];
    rec.v_first = v.has_value();
    for (std::size_t i = 0; i < 2 && rec.v_first; ++i) {
      if (rec.onset[i] && *rec.onset[i] <= *v) rec.v_first = false;
    }
  });
  for (const auto& rec : result.onsets) result.v_first_count += rec.v_first ? 1 : 0;
  return result;
}

CsvWriter trace_csv(const attention::TrainTrace& trace) {
  CsvWriter csv({"step", "loss", "norm_dq", "norm_dk", "norm_dv", "gnorm_q", "gnorm_k", "gnorm_v"});
  for (const auto& row : trace.rows) {
    csv.add_row({std::to_string(row.step), format_double(row.loss),
                 format_double(row.norm_delta[0]), format_double(row.norm_delta[1]),
                 format_double(row.norm_delta[2]), format_double(row.grad_norm[0]),
                 format_double(row.grad_norm[1]), format_double(row.grad_norm[2])});
  }
  return csv;
}

CsvWriter onset_csv(const TwoStageResult& result) {
  CsvWriter csv({"seed", "onset_q", "onset_k", "onset_v", "v_first", "diverged_step"});
  for (const auto& rec : result.onsets) {
    csv.add_row({std::to_string(rec.seed), opt_step(rec.onset[0]), opt_step(rec.onset[1]),
                 opt_step(rec.onset[2]), rec.v_first ? "1" : "0", opt_step(rec.diverged_step)});
  }
  return csv;
}

// --- prefix-check -----------------------------------------------------------

PrefixCheckResult prefix_check(const ExperimentConfig& config) {
  config.validate();
  PrefixCheckResult result;
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t i = 0; i < config.instances; ++i) {
      Rng rng(derive_seed(seed, i));
      PrefixCheckRow row;
      row.seed = seed;
      row.instance = i;
      row.d = 2 + rng.index(7);
      row.m = 1 + rng.index(6);
      row.r = 1 + rng.index(4);
      const auto w =
          attention::AttentionWeights::gaussian(rng, row.d, row.d, 1.0 / static_cast<double>(row.d));
      attention::AttentionInput in{gaussian_matrix(rng, row.m, row.d, 1.0),
                                   gaussian_vector(rng, row.d, 1.0)};
      attention::PrefixAdapter p{gaussian_matrix(rng, row.r, row.d, 1.0),
                                 gaussian_matrix(rng, row.r, row.d, 1.0)};
      const Vector direct = attention::prefix_forward_direct(w, in, p);
      const auto interp = attention::prefix_forward_interp(w, in, p);
      row.alpha = interp.alpha;
      row.sup_error = max_abs_diff(direct, interp.output);
      result.max_error = std::max(result.max_error, row.sup_error);
      result.min_alpha = std::min(result.min_alpha, row.alpha);
      result.max_alpha = std::max(result.max_alpha, row.alpha);
      result.rows.push_back(row);
    }
  }
  result.passed = result.max_error <= config.prefix_tolerance && result.min_alpha > 0.0 &&
                  result.max_alpha < 1.0;
  return result;
}

CsvWriter prefix_csv(const PrefixCheckResult& result) {
  CsvWriter csv({"seed", "instance", "d", "m", "r", "alpha", "sup_error"});
  for (const auto& row : result.rows) {
    csv.add_row({std::to_string(row.seed), std::to_string(row.instance), std::to_string(row.d),
                 std::to_string(row.m), std::to_string(row.r), format_double(row.alpha),
                 format_double(row.sup_error)});
  }
  return csv;
}

// --- grad-check -------------------------------------------------------------

namespace {

const char* kRegimes[] = {"gaussian", "near-zero", "zero-k", "zero-q", "all-zero"};

double attention_grad_error(const attention::AttentionWeights& w,
                            const attention::AttentionInput& in, const Vector& upstream,
                            bool scale_on, double h) {
  const auto grads = attention::attn_backward(w, in, upstream, scale_on);
  double worst = 0.0;
  for (Proj p : attention::kAllProj) {
    const ScalarFn f = [&](const Matrix& m) {
      attention::AttentionWeights probe = w;
      probe.get(p) = m;
      return dot(upstream, attention::attn_forward(probe, in, scale_on));
    };
    const Matrix fd = finite_diff_grad(f, w.get(p), h);
    worst = std::max(worst, relative_error(grads.get(p), fd));
  }
  return worst;
}

double toy_grad_error(const toy::ToyModelState& state, const toy::ToyDatapoint& dp, double h) {
  const std::size_t n = state.n;
  Matrix packed(1, n + 1);
  for (std::size_t i = 0; i < n; ++i) packed(0, i) = state.a[i];
  packed(0, n) = state.b;
  const ScalarFn f = [&](const Matrix& m) {
    toy::ToyModelState s = state;
    for (std::size_t i = 0; i < n; ++i) s.a[i] = m(0, i);
    s.b = m(0, n);
    return toy::toy_loss(s, dp);
  };
  const auto g = toy::toy_grads(state, dp);
  Matrix analytic(1, n + 1);
  for (std::size_t i = 0; i < n; ++i) analytic(0, i) = g.grad_a[i];
  analytic(0, n) = g.grad_b;
  return relative_error(analytic, finite_diff_grad(f, packed, h));
}

}  // namespace

GradCheckResult grad_check(const ExperimentConfig& config) {
  config.validate();
  GradCheckResult result;
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t i = 0; i < config.instances; ++i) {
      Rng rng(derive_seed(seed, 2 * i));
      const std::size_t d_in = 1 + rng.index(6);
      const std::size_t d_out = 1 + rng.index(6);
      const std::size_t m = 1 + rng.index(5);
      const std::size_t regime = i % 5;
      const double variance = regime == 1 ? 1e-4 / static_cast<double>(d_in)
                                          : 1.0 / static_cast<double>(d_in);
      auto w = attention::AttentionWeights::gaussian(rng, d_in, d_out, variance);
      if (regime == 2 || regime == 4) w.w_k = Matrix(d_in, d_out);
      if (regime == 3 || regime == 4) w.w_q = Matrix(d_in, d_out);
      if (regime == 4) w.w_v = Matrix(d_in, d_out);
      attention::AttentionInput in{gaussian_matrix(rng, m, d_in, 1.0),
                                   gaussian_vector(rng, d_in, 1.0)};
      const Vector upstream = gaussian_vector(rng, d_out, 1.0);

      const double err = attention_grad_error(w, in, upstream, config.scale_on, config.fd_step);
      result.max_error_attention = std::max(result.max_error_attention, err);
      result.rows.push_back({"attention", seed, i, kRegimes[regime], err});

      if (regime >= 2) {
        ++result.structure_instances;
        const auto g = attention::attn_backward(w, in, upstream, config.scale_on);
        if (regime == 2 && g.grad_q.is_zero()) ++result.zero_k_checks;
        if (regime == 3 && g.grad_k.is_zero()) ++result.zero_q_checks;
        if (regime == 4) {
          if (g.grad_q.is_zero()) ++result.zero_k_checks;
          if (g.grad_k.is_zero()) ++result.zero_q_checks;
          if (g.grad_v.frobenius_norm() > 0.0) ++result.zero_all_v_nonzero;
        }
      }

      Rng toy_rng(derive_seed(seed, 2 * i + 1));
      toy::ToyModelState state;
      state.n = 1 + toy_rng.index(16);
      toy::ToyDatapoint dp{gaussian_vector(toy_rng, state.n, 1.0), toy_rng.uniform(-2.0, 2.0)};
      state.w_star = gaussian_vector(toy_rng, state.n, 1.0 / static_cast<double>(state.n));
      state.a = gaussian_vector(toy_rng, state.n, 1.0 / static_cast<double>(state.n));
      state.b = toy_rng.normal();
      const char* toy_regime = "gaussian";
      if (i % 5 == 3) {
        state.a.assign(state.n, 0.0);
        toy_regime = "zero-a";
      } else if (i % 5 == 4) {
        state.b = 0.0;
        toy_regime = "zero-b";
      }
      const double toy_err = toy_grad_error(state, dp, config.fd_step);
      result.max_error_toy = std::max(result.max_error_toy, toy_err);
      result.rows.push_back({"toy", seed, i, toy_regime, toy_err});
    }
  }

  std::size_t expected_k = 0, expected_q = 0, expected_v = 0;
  for (const auto& row : result.rows) {
    if (row.target != "attention") continue;
    if (row.weights == std::string("zero-k") || row.weights == std::string("all-zero")) ++expected_k;
    if (row.weights == std::string("zero-q") || row.weights == std::string("all-zero")) ++expected_q;
    if (row.weights == std::string("all-zero")) ++expected_v;
  }
  result.passed = result.max_error_attention <= config.tolerance &&
                  result.max_error_toy <= config.tolerance && result.zero_k_checks == expected_k &&
                  result.zero_q_checks == expected_q && result.zero_all_v_nonzero == expected_v;
  return result;
}

CsvWriter grad_csv(const GradCheckResult& result) {
  CsvWriter csv({"target", "seed", "instance", "weights", "rel_error"});
  for (const auto& row : result.rows) {
    csv.add_row({row.target, std::to_string(row.seed), std::to_string(row.instance), row.weights,
                 format_double(row.rel_error)});
  }
  return csv;
}

// --- bounds -----------------------------------------------------------------

bounds::BoundInputs bound_inputs(const ExperimentConfig& config) {
  return {config.bound_r, config.bound_q_bits, config.bound_n_samples, config.bound_r_subg,
          config.bound_layers};
}

std::vector<BoundRow> bound_table(const ExperimentConfig& config) {
  config.validate();
  const auto in = bound_inputs(config);
  std::vector<BoundRow> rows;
  for (auto policy : {attention::PolicyKind::QV, attention::PolicyKind::QKV}) {
    rows.push_back({policy, bounds::param_count(policy, in.layers, in.r),
                    bounds::bound_for(policy, in)});
  }
  return rows;
}

CsvWriter bounds_csv(const std::vector<BoundRow>& rows) {
  CsvWriter csv({"policy", "params", "bound"});
  for (const auto& row : rows) {
    csv.add_row({attention::to_string(row.policy), std::to_string(row.params),
                 format_double(row.bound)});
  }
  return csv;
}

// --- orchestration ----------------------------------------------------------

namespace {

class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, RunOutcome& outcome)
      : dir_(std::move(dir)), outcome_(outcome) {}

  void write(const std::string& name, const CsvWriter& csv) {
    csv.write(dir_ / name);
    outcome_.files.push_back(name);
  }

 private:
  std::filesystem::path dir_;
  RunOutcome& outcome_;
};

void add(RunOutcome& o, const std::string& key, const std::string& value) {
  o.summary.emplace_back(key, value);
}

void run_toy_scan(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto report = scaling::width_scan(scan_config(config));
  out.write("scan.csv", scan_csv(report));
  out.write("scan_fit.csv", scan_fit_csv(report));
  add(o, "verdict", report.verdict.to_string());
  for (const char* base : {"delta1", "delta2", "delta3"}) {
    const auto* q = report.find(base);
    add(o, std::string("exponent_") + base, format_double(q->exponent_empirical));
    add(o, std::string("symbolic_") + base, format_double(q->exponent_symbolic));
  }
  add(o, "gamma_residual",
      report.gamma_residual ? format_double(*report.gamma_residual) : std::string("nan"));
  add(o, "assumption_holds", report.assumption_holds() ? "true" : "false");
  std::string diverged;
  for (std::size_t w : report.diverged_widths) diverged += (diverged.empty() ? "" : ",") + std::to_string(w);
  add(o, "diverged_widths", diverged.empty() ? "none" : diverged);
  add(o, "residual_out_of_range", std::to_string(report.residual_out_of_range.size()));
}

void run_sweep(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto result = lambda_sweep(config);
  out.write("sweep.csv", sweep_csv(result));
  std::size_t diverged = 0;
  for (const auto& cell : result.cells) diverged += cell.diverged;
  add(o, "cells", std::to_string(result.cells.size()));
  add(o, "diverged_runs", std::to_string(diverged));
  if (result.best) {
    const auto& best = result.cells[*result.best];
    add(o, "best_eta_qk", format_double(best.eta_qk));
    add(o, "best_eta_v", format_double(best.eta_v));
    add(o, "best_lambda", format_double(best.lambda));
    add(o, "best_mean_loss", format_optional(best.mean_loss));
  } else {
    add(o, "best", "none (every cell diverged)");
  }
}

void run_two_stage(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto result = two_stage(config);
  for (std::size_t s = 0; s < result.traces.size(); ++s) {
    if (result.onsets[s].diverged_step) continue;
    const CsvWriter csv = trace_csv(result.traces[s]);
    if (s == 0) out.write("trace.csv", csv);
    out.write("trace_seed" + std::to_string(config.seeds[s]) + ".csv", csv);
  }
  out.write("onset.csv", onset_csv(result));
  add(o, "v_first", std::to_string(result.v_first_count) + "/" +
                        std::to_string(result.onsets.size()));
}

void run_prefix(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto result = prefix_check(config);
  out.write("prefix.csv", prefix_csv(result));
  add(o, "instances", std::to_string(result.rows.size()));
  add(o, "max_sup_error", format_double(result.max_error));
  add(o, "alpha_range", format_double(result.min_alpha) + ".." + format_double(result.max_alpha));
  add(o, "passed", result.passed ? "true" : "false");
  o.exit_code = result.passed ? 0 : 1;
}

void run_grad(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto result = grad_check(config);
  out.write("grad.csv", grad_csv(result));
  add(o, "max_rel_error_attention", format_double(result.max_error_attention));
  add(o, "max_rel_error_toy", format_double(result.max_error_toy));
  add(o, "zero_structure_instances", std::to_string(result.structure_instances));
  add(o, "passed", result.passed ? "true" : "false");
  o.exit_code = result.passed ? 0 : 1;
}

void run_bounds(const ExperimentConfig& config, OutputDir& out, RunOutcome& o) {
  const auto rows = bound_table(config);
  out.write("bounds.csv", bounds_csv(rows));
  for (const auto& row : rows) {
    add(o, std::string("bound_") + attention::to_string(row.policy), format_double(row.bound));
    add(o, std::string("params_") + attention::to_string(row.policy), std::to_string(row.params));
  }
}

}  // namespace

RunOutcome run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  RunOutcome outcome;
  OutputDir out(out_dir, outcome);
  const auto start = std::chrono::steady_clock::now();
  switch (config.kind) {
    case ExperimentKind::ToyScan: run_toy_scan(config, out, outcome); break;
    case ExperimentKind::LambdaSweep: run_sweep(config, out, outcome); break;
    case ExperimentKind::TwoStage: run_two_stage(config, out, outcome); break;
    case ExperimentKind::PrefixCheck: run_prefix(config, out, outcome); break;
    case ExperimentKind::GradCheck: run_grad(config, out, outcome); break;
    case ExperimentKind::Bounds: run_bounds(config, out, outcome); break;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::ordered_json manifest;
  manifest["tool"] = "attnlab";
  manifest["version"] = kVersion;
  manifest["experiment"] = to_string(config.kind);
  manifest["rng"] = std::string(Rng::kAlgorithm);
  auto& echo = manifest["config"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : effective_settings(config)) echo[key] = value;
  auto& summary = manifest["summary"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : outcome.summary) summary[key] = value;
  manifest["files"] = outcome.files;
  manifest["exit_code"] = outcome.exit_code;
  manifest["wall_time_seconds"] = seconds;

  std::ofstream file(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + (out_dir / "manifest.json").string());
  file << manifest.dump(2) << '\n';
  return outcome;
}

}  // namespace attnlab::harness
