// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value experiment configuration. Every key has a default, so an
// empty file is a valid configuration for every experiment kind.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/bounds.hpp"
#include "attnlab/toymodel.hpp"

namespace attnlab::harness {

/// Invalid configuration or command line. The message names the field.
class UsageError : public std::invalid_argument {
 public:
  UsageError(const std::string& what, std::string field)
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class ExperimentKind { ToyScan, LambdaSweep, TwoStage, PrefixCheck, GradCheck, Bounds };

const char* to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view text);
std::vector<ExperimentKind> all_experiment_kinds();

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::GradCheck;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t workers = 1;

  // toy-scan
  double c_a = -1.0;
  double c_b = 0.0;
  toy::InitKind init_scheme = toy::InitKind::AGaussianBZero;
  std::vector<std::size_t> widths{64, 128, 256, 512, 1024, 2048, 4096};
  std::size_t probe_step = 3;
  double base_a = 0.5;
  double base_b = 0.5;
  double base_init = 1.0;

  // synthetic task (lambda-sweep, two-stage)
  attention::TaskConfig task;

  // training (lambda-sweep, two-stage)
  std::size_t steps = 200;
  double eta_qk = 0.2;
  double eta_v = 0.2;  // two-stage only
  std::vector<double> eta_qk_grid{0.2};
  std::vector<double> lambdas{1.0, 2.0, 4.0, 8.0};
  std::vector<double> eta_v_grid;  // replaces lambdas when non-empty
  attention::PolicyKind policy = attention::PolicyKind::QKV;  // two-stage only
  attention::InitMode init = attention::InitMode::PretrainedLike;
  bool scale_on = true;
  double near_zero_variance = 1e-4;
  std::size_t lora_rank = 0;  // 0 trains the matrices directly
  double lora_scale = 1.0;
  double tau = 0.01;

  // prefix-check, grad-check
  std::size_t instances = 100;
  double fd_step = 1e-6;
  double tolerance = 1e-5;  // grad-check; prefix-check uses prefix_tolerance
  double prefix_tolerance = 1e-10;

  // bounds
  std::size_t bound_r = 8;
  std::size_t bound_q_bits = 16;
  std::size_t bound_n_samples = 10000;
  double bound_r_subg = 1.0;
  std::vector<bounds::LayerShape> bound_layers{{64, 64}, {64, 64}};

  /// Kind-specific defaults (two-stage starts near zero, for instance).
  static ExperimentConfig defaults(ExperimentKind kind);

  /// Throws UsageError naming the first invalid field.
  void validate() const;
};

struct FieldDoc {
  std::string key;
  std::string description;
  std::string default_value;
};

/// Keys accepted for `kind`, with descriptions and defaults.
std::vector<FieldDoc> schema(ExperimentKind kind);

/// Parses key=value lines. '#' starts a comment; blank lines are ignored.
/// Duplicate keys and malformed lines throw UsageError.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Applies one key. Throws UsageError for unknown keys, keys that do not
/// apply to config.kind, and unparsable values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// defaults(kind) overlaid with the parsed text, then validated.
ExperimentConfig parse_config(ExperimentKind kind, std::string_view text);
ExperimentConfig load_config(ExperimentKind kind, const std::filesystem::path& path);

/// Every effective key of config.kind in schema order, formatted so that
/// parse_config reproduces the configuration.
std::vector<std::pair<std::string, std::string>> effective_settings(const ExperimentConfig& config);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace attnlab::harness
