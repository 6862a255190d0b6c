// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// attnlab <experiment> [--config FILE] [--out DIR] [--seeds LIST] [--workers N]
//                      [--set KEY=VALUE]... [--print-schema]

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnlab/config.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/experiments.hpp"

namespace {

using attnlab::harness::ExperimentConfig;
using attnlab::harness::ExperimentKind;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::size_t workers = 0;
  std::vector<std::string> overrides;
  bool print_schema = false;
};

std::string default_out_dir(ExperimentKind kind) {
  const char* env = std::getenv("ATTNLAB_OUT");
  const std::filesystem::path root = env != nullptr && *env != '\0' ? env : "attnlab-out";
  return (root / attnlab::harness::to_string(kind)).string();
}

int print_schema(ExperimentKind kind) {
  std::cout << "# " << attnlab::harness::to_string(kind) << " configuration (defaults shown)\n";
  for (const auto& field : attnlab::harness::schema(kind)) {
    std::cout << "# " << field.description << '\n' << field.key << " = " << field.default_value
              << '\n';
  }
  return 0;
}

int execute(ExperimentKind kind, const Options& opts) {
  if (opts.print_schema) return print_schema(kind);

  ExperimentConfig config = opts.config_path.empty()
                                ? ExperimentConfig::defaults(kind)
                                : attnlab::harness::load_config(kind, opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw attnlab::harness::UsageError("--set expects KEY=VALUE, got '" + kv + "'", "--set");
    attnlab::harness::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.seeds.empty()) config.seeds = attnlab::harness::parse_seed_list(opts.seeds);
  if (opts.workers > 0) config.workers = opts.workers;
  config.validate();

  const std::string out = opts.out_dir.empty() ? default_out_dir(kind) : opts.out_dir;
  const auto outcome = attnlab::harness::run(config, out);
  std::cout << attnlab::harness::to_string(kind) << " -> " << out << '\n';
  for (const auto& [key, value] : outcome.summary) std::cout << "  " << key << ": " << value << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnlab: attention fine-tuning laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(attnlab::harness::kVersion));

  Options opts;
  std::vector<std::pair<CLI::App*, ExperimentKind>> commands;
  const std::pair<ExperimentKind, const char*> descriptions[] = {
      {ExperimentKind::ToyScan, "width scan of the toy model against the exponent recursion"},
      {ExperimentKind::LambdaSweep, "eta_v / eta_qk sweep with W_k frozen"},
      {ExperimentKind::TwoStage, "weight-change onsets from a near-zero start"},
      {ExperimentKind::PrefixCheck, "prefix attention vs its interpolation form"},
      {ExperimentKind::GradCheck, "analytic gradients vs central differences"},
      {ExperimentKind::Bounds, "generalization bounds and parameter counts"},
  };
  for (const auto& [kind, description] : descriptions) {
    CLI::App* sub = app.add_subcommand(attnlab::harness::to_string(kind), description);
    sub->add_option("--config", opts.config_path, "key=value configuration file")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "output directory (default $ATTNLAB_OUT/<experiment>)");
    sub->add_option("--seeds", opts.seeds, "comma-separated seeds, overrides the config");
    sub->add_option("--workers", opts.workers, "worker threads, overrides the config")
        ->check(CLI::PositiveNumber);
    sub->add_option("--set", opts.overrides, "override one configuration key (repeatable)");
    sub->add_flag("--print-schema", opts.print_schema, "print every key with its default and exit");
    commands.emplace_back(sub, kind);
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, kind] : commands) {
    if (!sub->parsed()) continue;
    try {
      return execute(kind, opts);
    } catch (const attnlab::harness::UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
