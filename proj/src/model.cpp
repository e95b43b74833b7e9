#include "dynilm/model.hpp"

#include <cmath>
#include <numbers>

#include "dynilm/error.hpp"
#include "dynilm/rng.hpp"

namespace dynilm {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

void check_bound(const std::optional<double>& bound, const char* what) {
  if (bound && !(*bound > 0.0)) {
    throw ValidationError(std::string(what) + " must be positive when set");
  }
}

}  // namespace

DeviceModel::DeviceModel(std::string name, Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd c, double d,
                         DeviceOptions options)
    : name_(std::move(name)), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(d), options_(options) {
  const auto n = b_.size();
  if (n < 1) throw ValidationError("model '" + name_ + "': order must be at least 1");
  if (a_.rows() != n || a_.cols() != n || c_.size() != n) {
    throw ValidationError("model '" + name_ + "': A must be n x n and b, c of length n");
  }
  if (!all_finite(a_) || !all_finite(b_) || !all_finite(c_) || !std::isfinite(d_)) {
    throw ValidationError("model '" + name_ + "': non-finite coefficient");
  }
  check_bound(options_.max_input, "max_input");
  check_bound(options_.max_output, "max_output");
  if (options_.dc_normalized) {
    const double gain = dc_gain(*this);
    if (std::abs(gain - 1.0) > kDcNormalizedTolerance) {
      throw ValidationError("model '" + name_ + "' is flagged dc_normalized but has DC gain " + format_double(gain));
    }
  }
}

DeviceModel DeviceModel::with_name(std::string name) const {
  DeviceModel copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

DeviceModel DeviceModel::with_instant_off(bool instant_off) const {
  DeviceModel copy = *this;
  copy.options_.instant_off = instant_off;
  return copy;
}

DeviceModel DeviceModel::with_bounds(std::optional<double> max_input, std::optional<double> max_output) const {
  check_bound(max_input, "max_input");
  check_bound(max_output, "max_output");
  DeviceModel copy = *this;
  copy.options_.max_input = max_input;
  copy.options_.max_output = max_output;
  return copy;
}

bool DeviceModel::operator==(const DeviceModel& other) const {
  return name_ == other.name_ && a_ == other.a_ && b_ == other.b_ && c_ == other.c_ && d_ == other.d_ &&
         options_.instant_off == other.options_.instant_off && options_.max_input == other.options_.max_input &&
         options_.max_output == other.options_.max_output && options_.dc_normalized == other.options_.dc_normalized;
}

double spectral_radius(const Eigen::MatrixXd& a) {
  if (a.size() == 1) return std::abs(a(0, 0));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

StabilityReport is_stable(const DeviceModel& model) {
  const double radius = spectral_radius(model.a());
  return {radius < 1.0 - kStabilityMargin, radius};
}

double dc_gain(const DeviceModel& model) {
  const auto report = is_stable(model);
  if (!report.stable) {
    throw UnstableModelError("model '" + model.name() + "' is not stable (spectral radius " +
                                 format_double(report.spectral_radius) + ")",
                             report.spectral_radius);
  }
  const auto n = static_cast<Eigen::Index>(model.order());
  const Eigen::MatrixXd i_minus_a = Eigen::MatrixXd::Identity(n, n) - model.a();
  const Eigen::VectorXd x = i_minus_a.partialPivLu().solve(model.b());
  return model.c().dot(x) + model.d();
}

DeviceModel normalize_dc(const DeviceModel& model) {
  const double gain = dc_gain(model);
  if (gain == 0.0 || !std::isfinite(gain)) {
    throw ValidationError("model '" + model.name() + "' has zero DC gain and cannot be normalized");
  }
  DeviceModel out = model;
  out.b_ = model.b() / gain;
  out.d_ = model.d() / gain;
  out.options_.dc_normalized = true;
  return out;
}

std::vector<double> simulate_zero_state(const DeviceModel& model, std::span<const double> u) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i])) {
      throw ValidationError("non-finite input sample at position " + std::to_string(i));
    }
  }
  const auto n = static_cast<Eigen::Index>(model.order());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next(n);
  std::vector<double> y(u.size());
  double previous = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (model.instant_off() && u[k] == 0.0 && previous != 0.0) x.setZero();
    y[k] = model.c().dot(x) + model.d() * u[k];
    next.noalias() = model.a() * x;
    next += model.b() * u[k];
    x.swap(next);
    previous = u[k];
  }
  return y;
}

SignalSeries simulate_zero_state(const DeviceModel& model, const SignalSeries& u) {
  try {
    return SignalSeries(simulate_zero_state(model, u.span()), u.sample_period(), u.start_index());
  } catch (const ValidationError&) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(u[i])) {
        throw ValidationError("non-finite input sample at k=" +
                              std::to_string(u.start_index() + static_cast<Index>(i)));
      }
    }
    throw;
  }
}

SignalSeries step_response(const DeviceModel& model, std::size_t horizon, double level) {
  if (horizon < 1) throw ValidationError("step response horizon must be at least 1");
  return simulate_zero_state(model, SignalSeries(std::vector<double>(horizon, level)));
}

DeviceModel random_stable_model(std::size_t order, std::uint64_t seed, bool instant_off) {
  if (order < 1) throw ValidationError("model order must be at least 1");
  const auto n = static_cast<Eigen::Index>(order);
  CounterRng rng(seed, order);
  // Redraw until the raw DC gain is bounded away from zero; a near-zero gain
  // would blow up b after normalization.
  while (true) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index i = 0;
    while (i < n) {
      if (n - i >= 2 && rng.next_uniform() < 0.5) {
        const double radius = 0.3 + 0.65 * rng.next_uniform();
        const double angle = std::numbers::pi * rng.next_uniform();
        const double re = radius * std::cos(angle);
        const double im = radius * std::sin(angle);
        a(i, i) = re;
        a(i, i + 1) = -im;
        a(i + 1, i) = im;
        a(i + 1, i + 1) = re;
        i += 2;
      } else {
        a(i, i) = -0.95 + 1.9 * rng.next_uniform();
        i += 1;
      }
    }
    Eigen::VectorXd b(n);
    Eigen::VectorXd c(n);
    for (Eigen::Index j = 0; j < n; ++j) b(j) = rng.next_normal();
    for (Eigen::Index j = 0; j < n; ++j) c(j) = rng.next_normal();

    DeviceOptions options;
    options.instant_off = instant_off;
    DeviceModel raw("random", std::move(a), std::move(b), std::move(c), 0.0, options);
    const double gain = dc_gain(raw);
    if (std::abs(gain) < 1e-3 * raw.b().norm() * raw.c().norm()) continue;
    return normalize_dc(raw);
  }
}

}  // namespace dynilm
