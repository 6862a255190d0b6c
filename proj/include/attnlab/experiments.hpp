// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runners behind the CLI subcommands. Each runner is a pure
// function of its ExperimentConfig; run() adds file output and a manifest.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/bounds.hpp"
#include "attnlab/config.hpp"
#include "attnlab/csv.hpp"
#include "attnlab/scaling.hpp"

namespace attnlab::harness {

inline constexpr const char* kVersion = "0.1.0";

scaling::ScanConfig scan_config(const ExperimentConfig& config);
CsvWriter scan_csv(const scaling::ScanReport& report);
CsvWriter scan_fit_csv(const scaling::ScanReport& report);

// --- lambda sweep -----------------------------------------------------------

struct SweepCell {
  double eta_qk = 0.0;
  double eta_v = 0.0;
  double lambda = 0.0;
  std::vector<std::optional<double>> final_loss;  // per seed; nullopt = diverged
  std::size_t diverged = 0;
  /// Seed mean; nullopt if any seed diverged.
  std::optional<double> mean_loss;
};

struct SweepResult {
  std::vector<double> eta_qk_axis;
  std::vector<double> second_axis;  // lambdas, or eta_v values
  bool second_axis_is_lambda = true;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepCell> cells;  // eta_qk-major
  std::optional<std::size_t> best;  // lowest mean_loss; ties go to the earlier cell

  const SweepCell& cell(std::size_t i, std::size_t j) const {
    return cells[i * second_axis.size() + j];
  }
};

SweepResult lambda_sweep(const ExperimentConfig& config);
CsvWriter sweep_csv(const SweepResult& result);

// --- two-stage --------------------------------------------------------------

struct OnsetRecord {
  std::uint64_t seed = 0;
  std::array<std::optional<std::size_t>, 3> onset;  // Q, K, V
  bool v_first = false;  // V's onset strictly precedes every other onset
  std::optional<std::size_t> diverged_step;
};

struct TwoStageResult {
  std::vector<OnsetRecord> onsets;
  std::vector<attention::TrainTrace> traces;  // per seed; empty trace if diverged
  std::size_t v_first_count = 0;
};

attention::TrainOptions train_options(const ExperimentConfig& config, std::uint64_t seed);
TwoStageResult two_stage(const ExperimentConfig& config);
CsvWriter trace_csv(const attention::TrainTrace& trace);
CsvWriter onset_csv(const TwoStageResult& result);

// --- prefix-check -----------------------------------------------------------

struct PrefixCheckRow {
  std::uint64_t seed = 0;
  std::size_t instance = 0;
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t r = 0;
  double alpha = 0.0;
  double sup_error = 0.0;
};

struct PrefixCheckResult {
  std::vector<PrefixCheckRow> rows;
  double max_error = 0.0;
  double min_alpha = 1.0;
  double max_alpha = 0.0;
  bool passed = false;  // max_error within tolerance and every alpha in (0, 1)
};

/// Random instances with d in [2, 8], m in [1, 6], r in [1, 4].
PrefixCheckResult prefix_check(const ExperimentConfig& config);
CsvWriter prefix_csv(const PrefixCheckResult& result);

// --- grad-check -------------------------------------------------------------

struct GradCheckRow {
  std::string target;  // "attention" or "toy"
  std::uint64_t seed = 0;
  std::size_t instance = 0;
  std::string weights;  // init regime of the instance
  double rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckRow> rows;
  double max_error_attention = 0.0;
  double max_error_toy = 0.0;
  std::size_t zero_k_checks = 0;  // W_k = 0 instances with grad_q exactly 0
  std::size_t zero_q_checks = 0;  // W_q = 0 instances with grad_k exactly 0
  std::size_t zero_all_v_nonzero = 0;  // all-zero instances with grad_v != 0
  std::size_t structure_instances = 0;
  bool passed = false;
};

/// Central differences with step fd_step against attn_backward and toy_grads.
GradCheckResult grad_check(const ExperimentConfig& config);
CsvWriter grad_csv(const GradCheckResult& result);

// --- bounds -----------------------------------------------------------------

struct BoundRow {
  attention::PolicyKind policy;
  std::size_t params = 0;
  double bound = 0.0;
};

bounds::BoundInputs bound_inputs(const ExperimentConfig& config);
std::vector<BoundRow> bound_table(const ExperimentConfig& config);
CsvWriter bounds_csv(const std::vector<BoundRow>& rows);

// --- orchestration ----------------------------------------------------------

struct RunOutcome {
  int exit_code = 0;
  std::vector<std::string> files;  // written, relative to the output directory
  std::vector<std::pair<std::string, std::string>> summary;
};

/// Validates the config, runs the experiment, writes its CSVs and
/// manifest.json into out_dir (created if needed).
RunOutcome run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace attnlab::harness
