#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dynilm/error.hpp"
#include "dynilm/model.hpp"
#include "dynilm/signal.hpp"

namespace dynilm {

/// Change-detection settings for one plug-level recording.
struct PlugRecordingLabel {
  std::string device_name;
  double on_threshold = 1.0;  // signal units
  Index settle_skip = 0;      // samples ignored after each switch-on when estimating the level
};

/// Autoregressive model with exogenous input:
///   y[k] = sum_j a[j] y[k-1-j] + sum_j b[j] u[k-delay-j]
struct ArxModel {
  std::vector<double> a;
  std::vector<double> b;
  std::size_t delay = 1;
  double residual_rms = 0.0;
  bool stable = false;  // false flags a fit whose AR part is unstable

  std::size_t na() const noexcept { return a.size(); }
  std::size_t nb() const noexcept { return b.size(); }
};

struct ArxOrders {
  std::size_t na = 3;
  std::size_t nb = 3;
  std::size_t delay = 1;
};

class RankDeficientError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Hysteresis threshold detector turning a plug trace into a piecewise-constant
/// input. On needs two consecutive samples above the threshold, off two at or
/// below it; the final sample of the trace confirms on its own.
PiecewiseInput detect_plug_input(const SignalSeries& y, const PlugRecordingLabel& label);

/// Ordinary least squares on the ARX regression. `row_mask`, when non-empty,
/// selects which samples k (by position) contribute a regression row.
ArxModel fit_arx(const SignalSeries& y, const SignalSeries& u, std::size_t na, std::size_t nb, std::size_t delay,
                 std::span<const char> row_mask = {});

/// Spectral radius of the AR companion matrix.
double arx_spectral_radius(const ArxModel& m);

/// Runs the ARX difference equation from rest.
std::vector<double> simulate_arx(const ArxModel& m, std::span<const double> u);

/// Observable canonical realization of the ARX transfer function.
DeviceModel arx_to_state_space(const ArxModel& m, std::string name = "arx");

/// Plug recording -> library model: detect input, align switch times with the
/// ARX input delay, fit, realize. Keeps the physical DC gain.
DeviceModel identify_device(const SignalSeries& y, const PlugRecordingLabel& label, ArxOrders orders = {});

/// True when every observed switch-off drops below 5% of the on-level within
/// two samples of leaving the on plateau.
bool detect_instant_off(const SignalSeries& y, const PiecewiseInput& input);

}  // namespace dynilm
