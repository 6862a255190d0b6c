// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Width-scaling exponents: v = Theta(n^gamma[v]).
//
// Three pieces:
//   * gamma_fit          empirical exponent from magnitudes measured at several widths
//   * gamma_recursion    symbolic exponents of the toy model under gradient descent
//   * width_scan         runs the toy model across widths and compares the two

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnlab/toymodel.hpp"

namespace attnlab::scaling {

/// Magnitudes all sit at the floor; there is no exponent to fit.
class DegenerateFitError : public DomainError {
 public:
  using DomainError::DomainError;
};

inline constexpr double kMagnitudeFloor = 1e-30;

struct GammaFit {
  std::string quantity;
  std::vector<std::size_t> widths;
  Vector magnitudes;  // geometric mean over seeds, per width
  double exponent = 0.0;
  double intercept = 0.0;  // natural-log intercept
  double r_squared = 0.0;
  std::size_t n_seeds = 0;
};

/// magnitudes_per_width[i][s] is |value| at widths[i] for seed s. Values are
/// floored at kMagnitudeFloor, averaged in log space, then regressed
/// log(mean) ~ log(width) by least squares.
GammaFit gamma_fit(std::string quantity, std::span<const std::size_t> widths,
                   const std::vector<Vector>& magnitudes_per_width);

/// Symbolic exponents at step t. -infinity marks a quantity that is
/// identically zero (e.g. b_0 under AGaussianBZero).
struct GammaPrediction {
  std::size_t t = 0;
  double gamma_xa = 0.0;
  double gamma_b = 0.0;
  std::array<double, 3> gamma_delta{};
  double gamma_f = 0.0;
};

/// Exponent propagation for t = 1..t_max assuming gamma[U] = 0 throughout:
///
///   gamma[x.a_t] = max(gamma[x.a_{t-1}], c_a + 1 + gamma[b_{t-1}])
///   gamma[b_t]   = max(gamma[b_{t-1}],   c_b + gamma[x.a_{t-1}])
///   delta1: c_a + 1 + 2 gamma[b_{t-1}]
///   delta2: c_b + 2 gamma[x.a_{t-1}]
///   delta3: c_a + c_b + 1 + gamma[x.a_{t-1}] + gamma[b_{t-1}]
std::vector<GammaPrediction> gamma_recursion(double c_a, double c_b, toy::InitKind scheme,
                                             std::size_t t_max);

struct EfficiencyVerdict {
  enum class Kind { Efficient, VanishingUpdate, ExplodingUpdate };
  Kind kind = Kind::Efficient;
  int term = 0;  // 1 or 2 when not Efficient
  double exponent = 0.0;

  bool efficient() const { return kind == Kind::Efficient; }
  /// "Efficient", "VanishingUpdate(delta1,-0.5)", ...
  std::string to_string() const;
};

/// Efficient iff |gamma_delta1| and |gamma_delta2| are within `tolerance`.
/// An exploding term is reported ahead of a vanishing one; delta1 ahead of delta2.
EfficiencyVerdict classify_efficiency(double gamma_delta1, double gamma_delta2, double tolerance);
/// Symbolic check at one step (exact, tolerance 0).
EfficiencyVerdict classify_efficiency(const GammaPrediction& pred, double tolerance = 0.0);
/// Symbolic check over every step t > 1; the first offending step decides.
EfficiencyVerdict classify_efficiency(std::span<const GammaPrediction> preds,
                                      double tolerance = 0.0);
/// Empirical check from fitted delta1 / delta2 exponents (default tolerance 0.1).
EfficiencyVerdict classify_efficiency(const GammaFit& delta1, const GammaFit& delta2,
                                      double tolerance = 0.1);

struct ScanConfig {
  double c_a = -1.0;
  double c_b = 0.0;
  toy::InitKind init = toy::InitKind::AGaussianBZero;
  std::vector<std::size_t> widths{64, 128, 256, 512, 1024, 2048, 4096};
  std::size_t probe_step = 3;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double base_a = 0.5;
  double base_b = 0.5;
  double base_init = 1.0;
  std::size_t workers = 1;
};

/// One toy run, summarized at the probe step.
struct ScanSample {
  std::size_t width = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::size_t diverged_step = 0;
  toy::StepDecomposition probe;
};

struct QuantityAgreement {
  std::string quantity;  // e.g. "delta1@t=3"
  double exponent_empirical = 0.0;
  double exponent_symbolic = 0.0;
  double r_squared = 0.0;
  double gap = 0.0;  // |empirical - symbolic|
  /// Empirical exponent falls well below the max-rule prediction, which the
  /// addition rule allows when terms cancel. Reported, never asserted.
  bool below_prediction = false;
  bool fitted = false;
};

struct ScanReport {
  ScanConfig config;
  std::vector<ScanSample> samples;  // width-major, then seed
  std::vector<GammaFit> fits;
  std::vector<GammaPrediction> predictions;  // t = 1..probe_step
  std::vector<QuantityAgreement> agreement;
  std::vector<std::size_t> diverged_widths;
  /// (width, seed) pairs whose |U_{probe-1}| left [1e-3, 1e3].
  std::vector<std::pair<std::size_t, std::uint64_t>> residual_out_of_range;
  /// Fitted exponent of |U_{probe-1}|; the symbolic recursion assumes 0.
  std::optional<double> gamma_residual;
  EfficiencyVerdict verdict;

  /// No divergence, residual in range everywhere, |gamma_residual| <= 0.2.
  bool assumption_holds() const;
  /// Width is flagged if any seed diverged or left the residual range there.
  bool width_flagged(std::size_t width) const;
  const QuantityAgreement* find(const std::string& base_name) const;
};

inline constexpr double kResidualLow = 1e-3;
inline constexpr double kResidualHigh = 1e3;
inline constexpr double kResidualExponentTolerance = 0.2;

/// Quantities fitted at the probe step, in report order.
inline constexpr std::array<const char*, 7> kScanQuantities{"delta1", "delta2", "delta3", "b",
                                                            "xa",     "f",      "u"};

/// "delta1" at step 3 is named "delta1@t=3".
std::string probe_name(const std::string& base, std::size_t t);
/// |value| of a kScanQuantities entry; "u" is the residual U_{t-1}.
double probe_magnitude(const toy::StepDecomposition& d, std::string_view quantity);

ScanReport width_scan(const ScanConfig& config);

}  // namespace attnlab::scaling
