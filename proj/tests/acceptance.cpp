// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnlab/bounds.hpp"
#include "attnlab/config.hpp"
#include "attnlab/experiments.hpp"
#include "attnlab/scaling.hpp"
#include "attnlab/toymodel.hpp"

using namespace attnlab;
using harness::ExperimentConfig;
using harness::ExperimentKind;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::size_t g_workers = 1;

// A1 -------------------------------------------------------------------------

Verdict decomposition_identity() {
  Rng pick(20260101);
  std::size_t steps_checked = 0, diverged_runs = 0, violations = 0;
  double worst = 0.0;
  for (int config = 0; config < 1000; ++config) {
    const std::size_t n = 4 + pick.index(509);
    const auto kind = config % 2 == 0 ? toy::InitKind::AGaussianBZero : toy::InitKind::AZeroBGaussian;
    const auto lr = toy::LrConfig::fixed(pick.uniform(0.01, 0.4) / static_cast<double>(n),
                                         pick.uniform(0.01, 0.4));
    const std::uint64_t seed = pick.next_u64();
    Rng data_rng(derive_seed(seed, 0));
    Rng init_rng(derive_seed(seed, 1));
    const auto dp = toy::make_datapoint(data_rng, n);
    auto state = toy::init_state(init_rng, dp, toy::InitScheme::make(kind, n));
    for (std::size_t t = 1; t <= 50; ++t) {
      try {
        auto [next, d] = toy::toy_step(state, dp, lr);
        const double measured = d.f_t - d.f_prev;
        const double err = std::abs(measured - (-d.delta1 - d.delta2 + d.delta3));
        const double scaled = err / std::max(1.0, std::abs(d.delta_f));
        worst = std::max(worst, scaled);
        if (scaled > 1e-12) ++violations;
        ++steps_checked;
        state = std::move(next);
      } catch (const DivergedError&) {
        ++diverged_runs;
        break;
      }
    }
  }
  return {violations == 0 && steps_checked > 0,
          std::to_string(steps_checked) + " steps over 1000 configs, worst |err|/max(1,|df|) = " +
              fmt("%.3g", worst) + ", diverged runs " + std::to_string(diverged_runs)};
}

// A2 -------------------------------------------------------------------------

scaling::ScanConfig scan_at(double c_a, double c_b) {
  auto config = harness::scan_config(ExperimentConfig::defaults(ExperimentKind::ToyScan));
  config.c_a = c_a;
  config.c_b = c_b;
  config.workers = g_workers;
  return config;
}

Verdict scaling_efficient() {
  const auto report = scaling::width_scan(scan_at(-1.0, 0.0));
  bool ok = report.diverged_widths.empty();
  std::string detail = "(-1,0):";
  for (const char* name : {"delta1", "delta2", "delta3"}) {
    const auto* q = report.find(name);
    ok = ok && q->fitted && std::abs(q->exponent_empirical) <= 0.15;
    detail += std::string(" ") + name + "=" + fmt("%+.3f", q->exponent_empirical);
  }
  return {ok, detail + ", verdict " + report.verdict.to_string()};
}

Verdict scaling_vanishing() {
  const auto report = scaling::width_scan(scan_at(-0.5, -0.5));
  const auto* q = report.find("delta1");
  const bool ok = report.diverged_widths.empty() && q->fitted &&
                  std::abs(q->exponent_empirical + 0.5) <= 0.15;
  return {ok, "(-1/2,-1/2): delta1=" + fmt("%+.3f", q->exponent_empirical) + " (target -0.5)"};
}

Verdict scaling_exploding() {
  const auto config = scan_at(0.0, 0.0);
  const auto report = scaling::width_scan(config);
  const auto* q = report.find("delta1");
  const bool within = q->fitted && std::abs(q->exponent_empirical - 1.0) <= 0.2;
  const std::size_t largest = config.widths.back();
  const bool blown_up = report.width_flagged(largest);

  // The recursion's t = 2 prediction (+1) is unaffected by the residual growth.
  auto t2 = config;
  t2.probe_step = 2;
  const auto early = scaling::width_scan(t2);
  std::string detail = "(0,0): delta1@t=3=" + fmt("%+.3f", q->exponent_empirical) +
                       ", largest width " + std::to_string(largest) +
                       (blown_up ? " left the finite-residual regime" : " stayed bounded") +
                       " (diverged widths " + std::to_string(report.diverged_widths.size()) +
                       ", |U| out of range " + std::to_string(report.residual_out_of_range.size()) +
                       "), delta1@t=2=" + fmt("%+.3f", early.find("delta1")->exponent_empirical);
  return {within || blown_up, detail};
}

// A3 -------------------------------------------------------------------------

Verdict prefix_equivalence() {
  auto config = ExperimentConfig::defaults(ExperimentKind::PrefixCheck);
  config.seeds = {1};
  config.instances = 100;
  const auto result = harness::prefix_check(config);
  return {result.passed && result.rows.size() == 100,
          std::to_string(result.rows.size()) + " instances, max sup error " +
              fmt("%.3g", result.max_error) + ", alpha in [" + fmt("%.4g", result.min_alpha) +
              ", " + fmt("%.4g", result.max_alpha) + "]"};
}

// A4 -------------------------------------------------------------------------

Verdict gradient_correctness() {
  auto config = ExperimentConfig::defaults(ExperimentKind::GradCheck);
  config.seeds = {1};
  config.instances = 100;
  config.fd_step = 1e-6;
  config.tolerance = 1e-5;
  const auto result = harness::grad_check(config);
  return {result.passed,
          "attention max rel err " + fmt("%.3g", result.max_error_attention) + ", toy max rel err " +
              fmt("%.3g", result.max_error_toy) + ", zero-structure instances " +
              std::to_string(result.structure_instances) + " (grad_q=0 " +
              std::to_string(result.zero_k_checks) + ", grad_k=0 " +
              std::to_string(result.zero_q_checks) + ", grad_v!=0 " +
              std::to_string(result.zero_all_v_nonzero) + ")"};
}

// A5 -------------------------------------------------------------------------

Verdict bound_coefficients() {
  Rng rng(55);
  double worst_ratio = 0.0, worst_homog = 0.0;
  bool counts_ok = true;
  const double root_half = std::sqrt(1.5);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  for (int trial = 0; trial < 500; ++trial) {
    bounds::BoundInputs in;
    in.r = 1 + rng.index(64);
    in.q_bits = 1 + rng.index(32);
    in.n_samples = 1 + rng.index(100000);
    in.r_subg = rng.uniform(0.1, 10.0);
    const std::size_t d_in = 1 + rng.index(2048), d_out = 1 + rng.index(2048);
    in.layers.assign(1 + rng.index(24), {d_in, d_out});

    const double qv = bounds::bound_qv(in), qkv = bounds::bound_qkv(in);
    worst_ratio = std::max(worst_ratio, std::abs(qkv / qv - root_half));

    const std::size_t k = 2 + rng.index(7);
    auto scaled = in;
    scaled.n_samples *= k;
    worst_homog = std::max(worst_homog, rel(bounds::bound_qv(scaled), qv / std::sqrt(double(k))));
    scaled = in;
    scaled.r *= k;
    worst_homog = std::max(worst_homog, rel(bounds::bound_qkv(scaled), qkv * std::sqrt(double(k))));
    scaled = in;
    scaled.q_bits *= k;
    worst_homog = std::max(worst_homog, rel(bounds::bound_qv(scaled), qv * std::sqrt(double(k))));

    const auto p_qv = bounds::param_count(attention::PolicyKind::QV, in.layers, in.r);
    const auto p_qkv = bounds::param_count(attention::PolicyKind::QKV, in.layers, in.r);
    counts_ok = counts_ok && 3 * p_qv == 2 * p_qkv;
  }
  return {worst_ratio <= 1e-12 && worst_homog <= 1e-12 && counts_ok,
          "500 inputs, max |ratio - sqrt(1.5)| = " + fmt("%.3g", worst_ratio) +
              ", max homogeneity rel err " + fmt("%.3g", worst_homog) + ", QV/QKV params = 2/3 " +
              (counts_ok ? "exactly" : "violated")};
}

// A6 -------------------------------------------------------------------------

Verdict two_stage() {
  auto config = ExperimentConfig::defaults(ExperimentKind::TwoStage);
  config.workers = g_workers;
  const auto result = harness::two_stage(config);
  std::string detail;
  for (const auto& rec : result.onsets) {
    auto s = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "-"; };
    detail += " seed" + std::to_string(rec.seed) + "(v=" + s(rec.onset[2]) + ",q=" + s(rec.onset[0]) +
              ",k=" + s(rec.onset[1]) + ")";
  }
  return {result.v_first_count >= 4 && result.onsets.size() == 5,
          "V first in " + std::to_string(result.v_first_count) + "/" +
              std::to_string(result.onsets.size()) + " seeds:" + detail};
}

// A7 -------------------------------------------------------------------------

Verdict lambda_advantage() {
  auto config = ExperimentConfig::defaults(ExperimentKind::LambdaSweep);
  config.workers = g_workers;
  const auto result = harness::lambda_sweep(config);
  const double inf = std::numeric_limits<double>::infinity();
  double at_one = inf, best_above = inf;
  std::string detail;
  for (const auto& cell : result.cells) {
    const double mean = cell.mean_loss.value_or(inf);
    detail += " lambda=" + fmt("%g", cell.lambda) + ":" + fmt("%.4f", mean);
    if (cell.lambda == 1.0) at_one = std::min(at_one, mean);
    if (cell.lambda > 1.0) best_above = std::min(best_above, mean);
  }
  return {best_above <= at_one && std::isfinite(at_one),
          "mean final loss" + detail + " (min over lambda>1 " + fmt("%.4f", best_above) +
              " vs lambda=1 " + fmt("%.4f", at_one) + ")"};
}

// A8 -------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Verdict reproducibility(const std::filesystem::path& scratch) {
  std::vector<ExperimentConfig> configs;
  for (auto kind : harness::all_experiment_kinds()) {
    auto c = ExperimentConfig::defaults(kind);
    c.workers = g_workers;
    configs.push_back(c);
  }
  std::size_t files = 0, mismatches = 0;
  for (const auto& c : configs) {
    const auto a = scratch / (std::string(harness::to_string(c.kind)) + "-1");
    const auto b = scratch / (std::string(harness::to_string(c.kind)) + "-2");
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    const auto first = harness::run(c, a);
    auto second_config = c;
    second_config.workers = std::max<std::size_t>(2, c.workers);
    const auto second = harness::run(second_config, b);
    if (first.files != second.files) ++mismatches;
    for (const auto& f : first.files) {
      ++files;
      if (slurp(a / f) != slurp(b / f)) ++mismatches;
    }
  }
  return {mismatches == 0 && files > 0,
          std::to_string(files) + " CSV files from " + std::to_string(configs.size()) +
              " experiments compared across reruns (second run with more workers), " +
              std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnlab acceptance suite"};
  std::string scratch = (std::filesystem::temp_directory_path() / "attnlab-acceptance").string();
  std::vector<std::string> only;
  app.add_option("--workers", g_workers, "worker threads for scans and sweeps")
      ->check(CLI::PositiveNumber);
  app.add_option("--scratch", scratch, "directory for the reproducibility reruns");
  app.add_option("--only", only, "run only these criteria (e.g. A2a A7)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"A1", decomposition_identity},
      {"A2a", scaling_efficient},
      {"A2b", scaling_vanishing},
      {"A2c", scaling_exploding},
      {"A3", prefix_equivalence},
      {"A4", gradient_correctness},
      {"A5", bound_coefficients},
      {"A6", two_stage},
      {"A7", lambda_advantage},
      {"A8", [&] { return reproducibility(scratch); }},
  };

  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%-4s %s  %s  [%.1fs]\n", id.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                seconds);
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
