// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "attnlab/errors.hpp"

namespace attnlab::harness {

namespace {

enum KindBit : unsigned {
  kScan = 1u << 0,
  kSweep = 1u << 1,
  kTwoStage = 1u << 2,
  kPrefix = 1u << 3,
  kGrad = 1u << 4,
  kBounds = 1u << 5,
  kAll = 0x3fu,
};

unsigned bit(ExperimentKind kind) { return 1u << static_cast<unsigned>(kind); }

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  if (trim(text).empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.emplace_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw UsageError("invalid value '" + value + "' for " + key + ": expected " + expected, key);
}

double to_double(const std::string& key, const std::string& value) {
  const std::string v(trim(value));
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
    bad_value(key, value, "a finite number");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const std::string v(trim(value));
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    bad_value(key, value, "a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string v(trim(value));
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<double> to_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& part : split(value, ',')) out.push_back(to_double(key, part));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  for (const auto& part : split(value, ',')) out.push_back(to_size(key, part));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format(values[i]);
  }
  return out;
}

// Shortest text that parses back to the same double, for readable configs.
std::string fmt_real(double v) {
  char buf[40];
  for (int digits = 1; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::vector<bounds::LayerShape> to_layers(const std::string& key, const std::string& value) {
  std::vector<bounds::LayerShape> out;
  for (const auto& part : split(value, ',')) {
    const auto x = part.find('x');
    if (x == std::string::npos) bad_value(key, value, "a list like 64x64,128x64");
    out.emplace_back(to_size(key, part.substr(0, x)), to_size(key, part.substr(x + 1)));
  }
  return out;
}

template <class Parse>
auto parse_enum(const std::string& key, const std::string& value, Parse parse,
                const std::string& expected) {
  try {
    return parse(std::string(trim(value)));
  } catch (const DomainError&) {
    bad_value(key, value, expected);
  }
}

struct Field {
  const char* key;
  unsigned kinds;
  const char* description;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define ATTNLAB_FIELD(KEY, KINDS, DESC, SETTER, GETTER)                                    \
  Field {                                                                                   \
    KEY, KINDS, DESC,                                                                       \
        [](ExperimentConfig& c, [[maybe_unused]] const std::string& k, const std::string& v) { SETTER; },    \
        [](const ExperimentConfig& c) -> std::string { return GETTER; }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      ATTNLAB_FIELD("seeds", kAll, "comma-separated RNG seeds, non-empty",
                    c.seeds = parse_seed_list(v), join(c.seeds, fmt_size)),
      ATTNLAB_FIELD("workers", kScan | kSweep | kTwoStage, "parallel worker threads",
                    c.workers = to_size(k, v), fmt_size(c.workers)),

      ATTNLAB_FIELD("c_a", kScan, "exponent of eta_a = base_a * n^c_a",
                    c.c_a = to_double(k, v), fmt_real(c.c_a)),
      ATTNLAB_FIELD("c_b", kScan, "exponent of eta_b = base_b * n^c_b",
                    c.c_b = to_double(k, v), fmt_real(c.c_b)),
      ATTNLAB_FIELD("init_scheme", kScan, "a-gaussian (b starts at 0) or b-gaussian (a starts at 0)",
                    c.init_scheme = parse_enum(k, v, toy::parse_init_kind,
                                               "a-gaussian or b-gaussian"),
                    toy::to_string(c.init_scheme)),
      ATTNLAB_FIELD("widths", kScan, "strictly increasing widths, at least 3, each >= 8",
                    c.widths = to_sizes(k, v), join(c.widths, fmt_size)),
      ATTNLAB_FIELD("probe_step", kScan, "step at which magnitudes are fitted",
                    c.probe_step = to_size(k, v), fmt_size(c.probe_step)),
      ATTNLAB_FIELD("base_a", kScan, "width-independent factor of eta_a",
                    c.base_a = to_double(k, v), fmt_real(c.base_a)),
      ATTNLAB_FIELD("base_b", kScan, "width-independent factor of eta_b",
                    c.base_b = to_double(k, v), fmt_real(c.base_b)),
      ATTNLAB_FIELD("base_init", kScan, "initial variance factor of the Gaussian factor",
                    c.base_init = to_double(k, v), fmt_real(c.base_init)),

      ATTNLAB_FIELD("task", kSweep | kTwoStage, "regression or token-class",
                    c.task.kind = parse_enum(k, v, attention::parse_task_kind,
                                             "regression or token-class"),
                    attention::to_string(c.task.kind)),
      ATTNLAB_FIELD("task_m", kSweep | kTwoStage, "context length m",
                    c.task.m = to_size(k, v), fmt_size(c.task.m)),
      ATTNLAB_FIELD("task_d_in", kSweep | kTwoStage, "input width d_in",
                    c.task.d_in = to_size(k, v), fmt_size(c.task.d_in)),
      ATTNLAB_FIELD("task_d_out", kSweep | kTwoStage, "output width d_out",
                    c.task.d_out = to_size(k, v), fmt_size(c.task.d_out)),
      ATTNLAB_FIELD("task_samples", kSweep | kTwoStage, "number of training samples",
                    c.task.n_samples = to_size(k, v), fmt_size(c.task.n_samples)),
      ATTNLAB_FIELD("task_seed", kSweep | kTwoStage, "seed of the synthetic dataset",
                    c.task.seed = to_u64(k, v), std::to_string(c.task.seed)),
      ATTNLAB_FIELD("task_query_noise", kSweep | kTwoStage, "noise added to the planted query",
                    c.task.query_noise = to_double(k, v), fmt_real(c.task.query_noise)),
      ATTNLAB_FIELD("task_label_noise", kSweep | kTwoStage, "noise added to the targets",
                    c.task.label_noise = to_double(k, v), fmt_real(c.task.label_noise)),

      ATTNLAB_FIELD("steps", kSweep | kTwoStage, "gradient-descent steps",
                    c.steps = to_size(k, v), fmt_size(c.steps)),
      ATTNLAB_FIELD("eta_qk", kTwoStage, "learning rate of W_q and W_k",
                    c.eta_qk = to_double(k, v), fmt_real(c.eta_qk)),
      ATTNLAB_FIELD("eta_v", kTwoStage, "learning rate of W_v",
                    c.eta_v = to_double(k, v), fmt_real(c.eta_v)),
      ATTNLAB_FIELD("policy", kTwoStage, "qkv or qv",
                    c.policy = parse_enum(k, v, attention::parse_policy, "qkv, qv or none"),
                    attention::to_string(c.policy)),
      ATTNLAB_FIELD("eta_qk_grid", kSweep, "learning rates of W_q (first sweep axis)",
                    c.eta_qk_grid = to_doubles(k, v), join(c.eta_qk_grid, fmt_real)),
      ATTNLAB_FIELD("lambdas", kSweep, "eta_v / eta_qk ratios (second sweep axis)",
                    c.lambdas = to_doubles(k, v), join(c.lambdas, fmt_real)),
      ATTNLAB_FIELD("eta_v_grid", kSweep, "explicit eta_v axis; replaces lambdas when set",
                    c.eta_v_grid = to_doubles(k, v), join(c.eta_v_grid, fmt_real)),
      ATTNLAB_FIELD("init", kSweep | kTwoStage, "near-zero or pretrained-like base weights",
                    c.init = parse_enum(k, v, attention::parse_init_mode,
                                        "near-zero or pretrained-like"),
                    attention::to_string(c.init)),
      ATTNLAB_FIELD("near_zero_variance", kSweep | kTwoStage,
                    "near-zero init variance, multiplied by 1/d_in",
                    c.near_zero_variance = to_double(k, v), fmt_real(c.near_zero_variance)),
      ATTNLAB_FIELD("scale_on", kSweep | kTwoStage | kGrad, "divide scores by sqrt(d_out)",
                    c.scale_on = to_bool(k, v), fmt_bool(c.scale_on)),
      ATTNLAB_FIELD("lora_rank", kSweep | kTwoStage, "LoRA rank; 0 tunes the matrices directly",
                    c.lora_rank = to_size(k, v), fmt_size(c.lora_rank)),
      ATTNLAB_FIELD("lora_scale", kSweep | kTwoStage, "LoRA scale s >= 1",
                    c.lora_scale = to_double(k, v), fmt_real(c.lora_scale)),
      ATTNLAB_FIELD("tau", kTwoStage, "relative-norm threshold of the onset step",
                    c.tau = to_double(k, v), fmt_real(c.tau)),

      ATTNLAB_FIELD("instances", kPrefix | kGrad, "random instances per check",
                    c.instances = to_size(k, v), fmt_size(c.instances)),
      ATTNLAB_FIELD("fd_step", kGrad, "central-difference step h",
                    c.fd_step = to_double(k, v), fmt_real(c.fd_step)),
      ATTNLAB_FIELD("tolerance", kGrad, "maximum accepted relative gradient error",
                    c.tolerance = to_double(k, v), fmt_real(c.tolerance)),
      ATTNLAB_FIELD("prefix_tolerance", kPrefix, "maximum accepted sup-norm difference",
                    c.prefix_tolerance = to_double(k, v), fmt_real(c.prefix_tolerance)),

      ATTNLAB_FIELD("bound_r", kBounds, "adapter rank r",
                    c.bound_r = to_size(k, v), fmt_size(c.bound_r)),
      ATTNLAB_FIELD("bound_q_bits", kBounds, "bits per tuned parameter",
                    c.bound_q_bits = to_size(k, v), fmt_size(c.bound_q_bits)),
      ATTNLAB_FIELD("bound_n_samples", kBounds, "training-set size N",
                    c.bound_n_samples = to_size(k, v), fmt_size(c.bound_n_samples)),
      ATTNLAB_FIELD("bound_r_subg", kBounds, "sub-Gaussian constant R of the loss",
                    c.bound_r_subg = to_double(k, v), fmt_real(c.bound_r_subg)),
      ATTNLAB_FIELD("bound_layers", kBounds, "tuned layers as d_inxd_out, comma-separated",
                    c.bound_layers = to_layers(k, v),
                    join(c.bound_layers,
                         [](const bounds::LayerShape& l) {
                           return std::to_string(l.first) + "x" + std::to_string(l.second);
                         })),
  };
  return table;
}

#undef ATTNLAB_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw UsageError(field + ": " + message, field);
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ToyScan: return "toy-scan";
    case ExperimentKind::LambdaSweep: return "lambda-sweep";
    case ExperimentKind::TwoStage: return "two-stage";
    case ExperimentKind::PrefixCheck: return "prefix-check";
    case ExperimentKind::GradCheck: return "grad-check";
    case ExperimentKind::Bounds: break;
  }
  return "bounds";
}

std::vector<ExperimentKind> all_experiment_kinds() {
  return {ExperimentKind::ToyScan,     ExperimentKind::LambdaSweep, ExperimentKind::TwoStage,
          ExperimentKind::PrefixCheck, ExperimentKind::GradCheck,   ExperimentKind::Bounds};
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  for (auto kind : all_experiment_kinds())
    if (text == to_string(kind)) return kind;
  throw UsageError("unknown experiment kind '" + std::string(text) + "'", "kind");
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  if (kind == ExperimentKind::TwoStage) {
    c.init = attention::InitMode::NearZero;
    c.policy = attention::PolicyKind::QKV;
  }
  return c;
}

void ExperimentConfig::validate() const {
  require(!seeds.empty(), "seeds", "at least one seed is required");
  require(workers >= 1, "workers", "must be >= 1");
  switch (kind) {
    case ExperimentKind::ToyScan: {
      require(widths.size() >= 3, "widths", "at least 3 widths are required");
      for (std::size_t i = 0; i < widths.size(); ++i) {
        require(widths[i] >= 8, "widths", "every width must be >= 8");
        require(i == 0 || widths[i] > widths[i - 1], "widths", "must be strictly increasing");
      }
      require(probe_step >= 1, "probe_step", "must be >= 1");
      require(base_a > 0.0, "base_a", "must be > 0");
      require(base_b > 0.0, "base_b", "must be > 0");
      require(base_init > 0.0, "base_init", "must be > 0");
      break;
    }
    case ExperimentKind::LambdaSweep:
    case ExperimentKind::TwoStage: {
      require(task.m >= 1, "task_m", "must be >= 1");
      require(task.d_in >= 1, "task_d_in", "must be >= 1");
      require(task.d_out >= 1, "task_d_out", "must be >= 1");
      require(task.n_samples >= 1, "task_samples", "must be >= 1");
      require(task.query_noise >= 0.0, "task_query_noise", "must be >= 0");
      require(task.label_noise >= 0.0, "task_label_noise", "must be >= 0");
      require(near_zero_variance >= 0.0, "near_zero_variance", "must be >= 0");
      require(lora_rank == 0 || lora_scale >= 1.0, "lora_scale", "must be >= 1");
      if (kind == ExperimentKind::TwoStage) {
        require(eta_qk > 0.0, "eta_qk", "must be > 0");
        require(eta_v > 0.0, "eta_v", "must be > 0");
        require(tau > 0.0, "tau", "must be > 0");
      } else {
        require(!eta_qk_grid.empty(), "eta_qk_grid", "must not be empty");
        for (double e : eta_qk_grid) require(e > 0.0, "eta_qk_grid", "rates must be > 0");
        if (eta_v_grid.empty()) {
          require(!lambdas.empty(), "lambdas", "must not be empty");
          for (double l : lambdas) require(l > 0.0, "lambdas", "ratios must be > 0");
        } else {
          for (double e : eta_v_grid) require(e > 0.0, "eta_v_grid", "rates must be > 0");
        }
      }
      break;
    }
    case ExperimentKind::PrefixCheck:
      require(instances >= 1, "instances", "must be >= 1");
      require(prefix_tolerance > 0.0, "prefix_tolerance", "must be > 0");
      break;
    case ExperimentKind::GradCheck:
      require(instances >= 1, "instances", "must be >= 1");
      require(fd_step > 0.0, "fd_step", "must be > 0");
      require(tolerance > 0.0, "tolerance", "must be > 0");
      break;
    case ExperimentKind::Bounds:
      require(bound_r >= 1, "bound_r", "must be >= 1");
      require(bound_q_bits >= 1, "bound_q_bits", "must be >= 1");
      require(bound_n_samples >= 1, "bound_n_samples", "must be >= 1");
      require(bound_r_subg > 0.0, "bound_r_subg", "must be > 0");
      for (const auto& [d_in, d_out] : bound_layers)
        require(d_in >= 1 && d_out >= 1, "bound_layers", "dimensions must be >= 1");
      break;
  }
}

std::vector<FieldDoc> schema(ExperimentKind kind) {
  const ExperimentConfig defaults = ExperimentConfig::defaults(kind);
  std::vector<FieldDoc> docs;
  for (const auto& f : fields()) {
    if (f.kinds & bit(kind)) docs.push_back({f.key, f.description, f.get(defaults)});
  }
  return docs;
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? end : end - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw UsageError("line " + std::to_string(line_no) + ": expected key=value", "line " +
                                                                            std::to_string(line_no));
      }
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty())
        throw UsageError("line " + std::to_string(line_no) + ": empty key",
                         "line " + std::to_string(line_no));
      if (!out.emplace(key, value).second)
        throw UsageError("duplicate key " + key, key);
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (field == nullptr) throw UsageError("unknown configuration key '" + key + "'", key);
  if (!(field->kinds & bit(config.kind))) {
    throw UsageError("key '" + key + "' does not apply to " + to_string(config.kind), key);
  }
  field->set(config, key, value);
}

ExperimentConfig parse_config(ExperimentKind kind, std::string_view text) {
  ExperimentConfig config = ExperimentConfig::defaults(kind);
  for (const auto& [key, value] : parse_key_values(text)) apply_setting(config, key, value);
  config.validate();
  return config;
}

ExperimentConfig load_config(ExperimentKind kind, const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw UsageError("cannot read config file " + path.string(), "config");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_config(kind, buffer.str());
}

std::vector<std::pair<std::string, std::string>> effective_settings(
    const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) {
    if (f.kinds & bit(config.kind)) out.emplace_back(f.key, f.get(config));
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) seeds.push_back(to_u64("seeds", part));
  if (seeds.empty()) throw UsageError("seeds: at least one seed is required", "seeds");
  return seeds;
}

}  // namespace attnlab::harness
