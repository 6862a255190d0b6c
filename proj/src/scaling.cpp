// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "attnlab/parallel.hpp"

namespace attnlab::scaling {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();

double symbolic_exponent(const GammaPrediction& p, std::string_view quantity) {
  if (quantity == "delta1") return p.gamma_delta[0];
  if (quantity == "delta2") return p.gamma_delta[1];
  if (quantity == "delta3") return p.gamma_delta[2];
  if (quantity == "b") return p.gamma_b;
  if (quantity == "xa") return p.gamma_xa;
  if (quantity == "f") return p.gamma_f;
  return 0.0;
}

}  // namespace

std::string probe_name(const std::string& base, std::size_t t) {
  return base + "@t=" + std::to_string(t);
}

double probe_magnitude(const toy::StepDecomposition& d, std::string_view quantity) {
  if (quantity == "delta1") return std::abs(d.delta1);
  if (quantity == "delta2") return std::abs(d.delta2);
  if (quantity == "delta3") return std::abs(d.delta3);
  if (quantity == "b") return std::abs(d.b_t);
  if (quantity == "xa") return std::abs(d.xa_t);
  if (quantity == "f") return std::abs(d.f_t);
  return std::abs(d.u_prev);
}

GammaFit gamma_fit(std::string quantity, std::span<const std::size_t> widths,
                   const std::vector<Vector>& magnitudes_per_width) {
  if (widths.size() < 3) throw DomainError("gamma_fit: need at least 3 widths");
  if (magnitudes_per_width.size() != widths.size())
    throw ShapeError("gamma_fit: one magnitude list per width required");
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (widths[i] <= widths[i - 1]) throw DomainError("gamma_fit: widths must increase strictly");
  }
  if (widths.front() == 0) throw DomainError("gamma_fit: widths must be positive");
  const std::size_t seeds = magnitudes_per_width.front().size();
  if (seeds == 0) throw DomainError("gamma_fit: no magnitudes");

  GammaFit fit;
  fit.quantity = std::move(quantity);
  fit.widths.assign(widths.begin(), widths.end());
  fit.n_seeds = seeds;

  bool any_above_floor = false;
  Vector log_w(widths.size());
  Vector log_m(widths.size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const Vector& per_seed = magnitudes_per_width[i];
    if (per_seed.size() != seeds) throw ShapeError("gamma_fit: ragged seed counts");
    double acc = 0.0;
    for (double m : per_seed) {
      const double mag = std::abs(m);
      if (std::isnan(mag)) throw DomainError("gamma_fit: NaN magnitude");
      if (mag > kMagnitudeFloor) any_above_floor = true;
      acc += std::log(std::max(mag, kMagnitudeFloor));
    }
    log_w[i] = std::log(static_cast<double>(widths[i]));
    log_m[i] = acc / static_cast<double>(seeds);
    fit.magnitudes.push_back(std::exp(log_m[i]));
  }
  if (!any_above_floor) throw DegenerateFitError("gamma_fit: all magnitudes at floor");

  const double k = static_cast<double>(widths.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    mean_x += log_w[i];
    mean_y += log_m[i];
  }
  mean_x /= k;
  mean_y /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const double dx = log_w[i] - mean_x;
    const double dy = log_m[i] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  fit.exponent = sxy / sxx;
  fit.intercept = mean_y - fit.exponent * mean_x;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const double r = log_m[i] - (fit.intercept + fit.exponent * log_w[i]);
    ss_res += r * r;
  }
  // A flat line fitted exactly explains everything there is to explain.
  const double r2 = syy <= 1e-24 * std::max(1.0, mean_y * mean_y) ? 1.0 : 1.0 - ss_res / syy;
  fit.r_squared = std::clamp(r2, 0.0, 1.0);
  return fit;
}

std::vector<GammaPrediction> gamma_recursion(double c_a, double c_b, toy::InitKind scheme,
                                             std::size_t t_max) {
  double xa_prev = 0.0;
  double b_prev = 0.0;
  if (scheme == toy::InitKind::AGaussianBZero) {
    b_prev = kNegInf;
  } else {
    xa_prev = kNegInf;
  }
  std::vector<GammaPrediction> out;
  out.reserve(t_max);
  for (std::size_t t = 1; t <= t_max; ++t) {
    GammaPrediction p;
    p.t = t;
    p.gamma_delta[0] = c_a + 1.0 + 2.0 * b_prev;
    p.gamma_delta[1] = c_b + 2.0 * xa_prev;
    p.gamma_delta[2] = c_a + c_b + 1.0 + xa_prev + b_prev;
    p.gamma_xa = std::max(xa_prev, c_a + 1.0 + b_prev);
    p.gamma_b = std::max(b_prev, c_b + xa_prev);
    p.gamma_f = p.gamma_xa + p.gamma_b;
    xa_prev = p.gamma_xa;
    b_prev = p.gamma_b;
    out.push_back(p);
  }
  return out;
}

std::string EfficiencyVerdict::to_string() const {
  if (kind == Kind::Efficient) return "Efficient";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s(delta%d,%.6g)",
                kind == Kind::VanishingUpdate ? "VanishingUpdate" : "ExplodingUpdate", term,
                exponent);
  return buf;
}

EfficiencyVerdict classify_efficiency(double gamma_delta1, double gamma_delta2,
                                      double tolerance) {
  const std::array<double, 2> g{gamma_delta1, gamma_delta2};
  for (int i = 0; i < 2; ++i) {
    if (g[i] > tolerance) return {EfficiencyVerdict::Kind::ExplodingUpdate, i + 1, g[i]};
  }
  for (int i = 0; i < 2; ++i) {
    if (g[i] < -tolerance) return {EfficiencyVerdict::Kind::VanishingUpdate, i + 1, g[i]};
  }
  return {};
}

EfficiencyVerdict classify_efficiency(const GammaPrediction& pred, double tolerance) {
  return classify_efficiency(pred.gamma_delta[0], pred.gamma_delta[1], tolerance);
}

EfficiencyVerdict classify_efficiency(std::span<const GammaPrediction> preds, double tolerance) {
  for (const auto& p : preds) {
    if (p.t < 2) continue;
    EfficiencyVerdict v = classify_efficiency(p, tolerance);
    if (!v.efficient()) return v;
  }
  return {};
}

EfficiencyVerdict classify_efficiency(const GammaFit& delta1, const GammaFit& delta2,
                                      double tolerance) {
  return classify_efficiency(delta1.exponent, delta2.exponent, tolerance);
}

bool ScanReport::assumption_holds() const {
  if (!diverged_widths.empty() || !residual_out_of_range.empty()) return false;
  return gamma_residual.has_value() &&
         std::abs(*gamma_residual) <= kResidualExponentTolerance;
}

bool ScanReport::width_flagged(std::size_t width) const {
  if (std::find(diverged_widths.begin(), diverged_widths.end(), width) != diverged_widths.end())
    return true;
  return std::any_of(residual_out_of_range.begin(), residual_out_of_range.end(),
                     [&](const auto& ws) { return ws.first == width; });
}

const QuantityAgreement* ScanReport::find(const std::string& base_name) const {
  const std::string name = probe_name(base_name, config.probe_step);
  for (const auto& q : agreement) {
    if (q.quantity == name) return &q;
  }
  return nullptr;
}

ScanReport width_scan(const ScanConfig& config) {
  if (config.widths.size() < 3) throw DomainError("width_scan: need at least 3 widths");
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    if (config.widths[i] < 8) throw DomainError("width_scan: widths must be >= 8");
    if (i > 0 && config.widths[i] <= config.widths[i - 1])
      throw DomainError("width_scan: widths must increase strictly");
  }
  if (config.seeds.empty()) throw DomainError("width_scan: seeds list is empty");
  if (config.probe_step == 0) throw DomainError("width_scan: probe step must be >= 1");

  ScanReport report;
  report.config = config;
  const std::size_t n_seeds = config.seeds.size();
  report.samples.resize(config.widths.size() * n_seeds);

  parallel_for(report.samples.size(), config.workers, [&](std::size_t idx) {
    const std::size_t n = config.widths[idx / n_seeds];
    const std::uint64_t seed = config.seeds[idx % n_seeds];
    ScanSample& sample = report.samples[idx];
    sample.width = n;
    sample.seed = seed;
    const auto scheme = toy::InitScheme::make(config.init, n, config.base_init);
    const auto lr =
        toy::LrConfig::from_exponents(n, config.base_a, config.c_a, config.base_b, config.c_b);
    try {
      sample.probe = toy::toy_run(n, scheme, lr, seed, config.probe_step).back();
    } catch (const DivergedError& e) {
      sample.diverged = true;
      sample.diverged_step = e.step();
    }
  });

  std::vector<std::size_t> fit_widths;
  for (std::size_t wi = 0; wi < config.widths.size(); ++wi) {
    bool diverged = false;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const ScanSample& sample = report.samples[wi * n_seeds + s];
      if (sample.diverged) {
        diverged = true;
        continue;
      }
      const double u = std::abs(sample.probe.u_prev);
      if (u < kResidualLow || u > kResidualHigh)
        report.residual_out_of_range.emplace_back(sample.width, sample.seed);
    }
    if (diverged) {
      report.diverged_widths.push_back(config.widths[wi]);
    } else {
      fit_widths.push_back(wi);
    }
  }

  report.predictions = gamma_recursion(config.c_a, config.c_b, config.init, config.probe_step);
  const GammaPrediction& at_probe = report.predictions.back();

  std::vector<std::size_t> widths;
  for (std::size_t wi : fit_widths) widths.push_back(config.widths[wi]);

  for (const char* base : kScanQuantities) {
    QuantityAgreement q;
    q.quantity = probe_name(base, config.probe_step);
    q.exponent_symbolic = symbolic_exponent(at_probe, base);
    q.exponent_empirical = std::numeric_limits<double>::quiet_NaN();
    q.gap = std::numeric_limits<double>::quiet_NaN();
    if (widths.size() >= 3) {
      std::vector<Vector> mags;
      for (std::size_t wi : fit_widths) {
        Vector per_seed;
        for (std::size_t s = 0; s < n_seeds; ++s)
          per_seed.push_back(probe_magnitude(report.samples[wi * n_seeds + s].probe, base));
        mags.push_back(std::move(per_seed));
      }
      try {
        GammaFit fit = gamma_fit(q.quantity, widths, mags);
        q.fitted = true;
        q.exponent_empirical = fit.exponent;
        q.r_squared = fit.r_squared;
        q.gap = std::abs(fit.exponent - q.exponent_symbolic);
        q.below_prediction = fit.exponent < q.exponent_symbolic - kResidualExponentTolerance;
        if (std::string_view(base) == "u") report.gamma_residual = fit.exponent;
        report.fits.push_back(std::move(fit));
      } catch (const DegenerateFitError&) {
        q.exponent_empirical = kNegInf;
        q.gap = q.exponent_symbolic == kNegInf ? 0.0 : kPosInf;
      }
    }
    report.agreement.push_back(std::move(q));
  }

  const QuantityAgreement* d1 = report.find("delta1");
  const QuantityAgreement* d2 = report.find("delta2");
  if (d1->fitted && d2->fitted) {
    report.verdict = classify_efficiency(d1->exponent_empirical, d2->exponent_empirical, 0.1);
    if (!report.diverged_widths.empty() && report.verdict.efficient()) {
      const bool first = d1->exponent_empirical >= d2->exponent_empirical;
      report.verdict = {EfficiencyVerdict::Kind::ExplodingUpdate, first ? 1 : 2,
                        first ? d1->exponent_empirical : d2->exponent_empirical};
    }
  } else {
    report.verdict = {EfficiencyVerdict::Kind::ExplodingUpdate, 1, kPosInf};
  }
  return report;
}

}  // namespace attnlab::scaling
