#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynilm/signal.hpp"

namespace dynilm {

/// Open-unit-disk margin used by every stability decision.
inline constexpr double kStabilityMargin = 1e-9;
/// Tolerance on |dc_gain - 1| for models flagged as DC-normalized.
inline constexpr double kDcNormalizedTolerance = 1e-9;

struct DeviceOptions {
  bool instant_off = false;
  std::optional<double> max_input;
  std::optional<double> max_output;
  bool dc_normalized = false;
};

/// Discrete LTI single-input single-output appliance model
///
///   x[k+1] = A x[k] + b u[k]
///   y[k]   = c' x[k] + d u[k]
///
/// with optional instant-off behaviour (state cleared when the input drops to
/// zero) and optional input/output bounds used as priors by the engine.
/// Immutable once built.
class DeviceModel {
 public:
  DeviceModel(std::string name, Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd c, double d = 0.0,
              DeviceOptions options = {});

  const std::string& name() const noexcept { return name_; }
  std::size_t order() const noexcept { return static_cast<std::size_t>(b_.size()); }
  const Eigen::MatrixXd& a() const noexcept { return a_; }
  const Eigen::VectorXd& b() const noexcept { return b_; }
  const Eigen::VectorXd& c() const noexcept { return c_; }
  double d() const noexcept { return d_; }
  bool instant_off() const noexcept { return options_.instant_off; }
  std::optional<double> max_input() const noexcept { return options_.max_input; }
  std::optional<double> max_output() const noexcept { return options_.max_output; }
  bool dc_normalized() const noexcept { return options_.dc_normalized; }
  const DeviceOptions& options() const noexcept { return options_; }

  DeviceModel with_name(std::string name) const;
  DeviceModel with_instant_off(bool instant_off) const;
  DeviceModel with_bounds(std::optional<double> max_input, std::optional<double> max_output) const;

  /// Exact equality of every field, used for determinism checks.
  bool operator==(const DeviceModel& other) const;

 private:
  friend DeviceModel normalize_dc(const DeviceModel& model);

  std::string name_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  double d_ = 0.0;
  DeviceOptions options_;
};

struct StabilityReport {
  bool stable = false;
  double spectral_radius = 0.0;
};

/// Stable iff every eigenvalue of A lies strictly inside the disk of radius 1 - 1e-9.
StabilityReport is_stable(const DeviceModel& model);
double spectral_radius(const Eigen::MatrixXd& a);

/// c'(I - A)^{-1} b + d. Throws UnstableModelError for unstable models.
double dc_gain(const DeviceModel& model);

/// Scales b and d so the DC gain becomes 1; A and c are untouched.
DeviceModel normalize_dc(const DeviceModel& model);

/// Zero-initial-state response. Output indices mirror the input's.
SignalSeries simulate_zero_state(const DeviceModel& model, const SignalSeries& u);
std::vector<double> simulate_zero_state(const DeviceModel& model, std::span<const double> u);

SignalSeries step_response(const DeviceModel& model, std::size_t horizon, double level = 1.0);

/// Deterministic random stable model with unit DC gain.
DeviceModel random_stable_model(std::size_t order, std::uint64_t seed, bool instant_off = false);

}  // namespace dynilm
