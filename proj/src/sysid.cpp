#include "dynilm/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dynilm {

namespace {

constexpr double kInstantOffFraction = 0.05;
constexpr std::size_t kInstantOffSamples = 2;
constexpr double kMaxOutputFactor = 1.25;
constexpr double kDepartureSigmas = 4.0;

struct RobustCenter {
  double median = 0.0;
  double sigma = 0.0;  // 1.4826 x MAD
};

RobustCenter robust_center(std::vector<double> xs) {
  if (xs.empty()) return {};
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  const double median = *mid;
  for (auto& x : xs) x = std::abs(x - median);
  std::nth_element(xs.begin(), mid, xs.end());
  return {median, 1.4826 * *mid};
}

}  // namespace

PiecewiseInput detect_plug_input(const SignalSeries& y, const PlugRecordingLabel& label) {
  if (y.empty()) throw ValidationError("cannot detect switches in an empty signal");
  if (!(label.on_threshold > 0.0)) throw ValidationError("on_threshold must be positive");
  if (label.settle_skip < 0) throw ValidationError("settle_skip must be nonnegative");

  const auto& v = y.values();
  const std::size_t n = v.size();
  const auto above = [&](std::size_t i) { return v[i] > label.on_threshold; };

  std::vector<SwitchPoint> events;
  bool on = false;
  std::size_t on_at = 0;
  const auto close_interval = [&](std::size_t off_at) {
    std::size_t first = on_at + static_cast<std::size_t>(label.settle_skip);
    if (first >= off_at) first = on_at;
    const double level = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(first),
                                         v.begin() + static_cast<std::ptrdiff_t>(off_at), 0.0) /
                         static_cast<double>(off_at - first);
    if (level <= 0.0) return false;
    events.push_back({y.start_index() + static_cast<Index>(on_at), level});
    if (off_at < n) events.push_back({y.start_index() + static_cast<Index>(off_at), 0.0});
    return true;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const bool confirm_next = (i + 1 == n);
    if (!on && above(i) && (confirm_next || above(i + 1))) {
      on = true;
      on_at = i;
    } else if (on && !above(i) && (confirm_next || !above(i + 1))) {
      close_interval(i);
      on = false;
    }
  }
  if (on) close_interval(n);
  return PiecewiseInput(std::move(events));
}

ArxModel fit_arx(const SignalSeries& y, const SignalSeries& u, std::size_t na, std::size_t nb, std::size_t delay,
                 std::span<const char> row_mask) {
  if (na < 1 || nb < 1) throw ValidationError("ARX orders na and nb must be at least 1");
  if (y.size() != u.size()) throw ValidationError("ARX fit needs input and output of equal length");
  if (y.size() < na + nb + delay + 10) {
    throw ValidationError("ARX fit needs at least na + nb + delay + 10 samples");
  }
  if (!row_mask.empty() && row_mask.size() != y.size()) throw ValidationError("row mask length mismatch");

  const std::size_t first = std::max(na, delay + nb - 1);
  std::vector<std::size_t> rows;
  for (std::size_t k = first; k < y.size(); ++k) {
    if (row_mask.empty() || row_mask[k]) rows.push_back(k);
  }
  const auto cols = static_cast<Eigen::Index>(na + nb);
  if (static_cast<Eigen::Index>(rows.size()) < cols) {
    throw RankDeficientError("too few regression rows for ARX(" + std::to_string(na) + "," + std::to_string(nb) +
                             "); try a lower order");
  }

  Eigen::MatrixXd phi(static_cast<Eigen::Index>(rows.size()), cols);
  Eigen::VectorXd target(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t k = rows[r];
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < na; ++j) phi(row, static_cast<Eigen::Index>(j)) = y[k - 1 - j];
    for (std::size_t j = 0; j < nb; ++j) phi(row, static_cast<Eigen::Index>(na + j)) = u[k - delay - j];
    target(row) = y[k];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) {
    throw RankDeficientError("ARX regressor matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                             std::to_string(cols) + "); the input is not exciting enough, try a lower order");
  }
  const Eigen::VectorXd theta = qr.solve(target);

  ArxModel m;
  m.a.assign(theta.data(), theta.data() + na);
  m.b.assign(theta.data() + na, theta.data() + na + nb);
  m.delay = delay;
  m.residual_rms = std::sqrt((target - phi * theta).squaredNorm() / static_cast<double>(rows.size()));
  m.stable = arx_spectral_radius(m) < 1.0 - kStabilityMargin;
  return m;
}

double arx_spectral_radius(const ArxModel& m) {
  const auto na = static_cast<Eigen::Index>(m.na());
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(na, na);
  for (Eigen::Index j = 0; j < na; ++j) companion(0, j) = m.a[static_cast<std::size_t>(j)];
  for (Eigen::Index j = 1; j < na; ++j) companion(j, j - 1) = 1.0;
  return spectral_radius(companion);
}

std::vector<double> simulate_arx(const ArxModel& m, std::span<const double> u) {
  std::vector<double> y(u.size(), 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.na() && j + 1 <= k; ++j) acc += m.a[j] * y[k - 1 - j];
    for (std::size_t j = 0; j < m.nb(); ++j) {
      if (k >= m.delay + j) acc += m.b[j] * u[k - m.delay - j];
    }
    y[k] = acc;
  }
  return y;
}

DeviceModel arx_to_state_space(const ArxModel& m, std::string name) {
  if (m.na() < 1 || m.nb() < 1) throw ValidationError("ARX orders na and nb must be at least 1");
  const double radius = arx_spectral_radius(m);
  if (!(radius < 1.0 - kStabilityMargin)) {
    throw UnstableModelError("ARX model is unstable (spectral radius " + format_double(radius) + ")", radius);
  }
  // H(z) = (beta_0 + ... + beta_n z^-n) / (1 + alpha_1 z^-1 + ... + alpha_n z^-n)
  const std::size_t n = std::max(m.na(), m.delay + m.nb() - 1);
  std::vector<double> alpha(n + 1, 0.0);
  std::vector<double> beta(n + 1, 0.0);
  for (std::size_t j = 0; j < m.na(); ++j) alpha[j + 1] = -m.a[j];
  for (std::size_t j = 0; j < m.nb(); ++j) beta[m.delay + j] = m.b[j];

  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b(dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const auto idx = static_cast<std::size_t>(j) + 1;
    a(j, 0) = -alpha[idx];
    if (j + 1 < dim) a(j, j + 1) = 1.0;
    b(j) = beta[idx] - alpha[idx] * beta[0];
  }
  c(0) = 1.0;
  return DeviceModel(std::move(name), std::move(a), std::move(b), std::move(c), beta[0]);
}

bool detect_instant_off(const SignalSeries& y, const PiecewiseInput& input) {
  const auto& events = input.events();
  bool any = false;
  for (std::size_t e = 1; e < events.size(); ++e) {
    if (events[e].level != 0.0) continue;
    const double level = events[e - 1].level;
    // Last sample before the detected off-switch still at half the on-level or more.
    Index plateau_end = events[e].k - 1;
    while (plateau_end > events[e - 1].k && y.at(plateau_end) < 0.5 * level) --plateau_end;
    const Index check = plateau_end + static_cast<Index>(kInstantOffSamples);
    if (!y.contains(check)) continue;
    any = true;
    if (y.at(check) > kInstantOffFraction * level) return false;
  }
  return any;
}

DeviceModel identify_device(const SignalSeries& y, const PlugRecordingLabel& label, ArxOrders orders) {
  const PiecewiseInput detected = detect_plug_input(y, label);
  const bool instant_off = detect_instant_off(y, detected);
  const auto& events = detected.events();
  const Index start = y.start_index();
  const auto delay = static_cast<Index>(orders.delay);
  const double scale = std::max(1.0, y.span().empty() ? 0.0 : *std::max_element(y.values().begin(), y.values().end()));
  const Index memory = static_cast<Index>(std::max(orders.na, orders.delay + orders.nb));

  // Quiet baseline: input off and away from any switch-off transient.
  std::vector<double> quiet;
  const auto u_det = detected.expand(start, y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (u_det[i] != 0.0) continue;
    const Index k = start + static_cast<Index>(i);
    bool near_off = false;
    for (const auto& e : events) {
      if (e.level == 0.0 && k >= e.k && k < e.k + 2 * memory) near_off = true;
    }
    if (!near_off) quiet.push_back(y[i]);
  }
  // Median and MAD: an inverse-response dip before a late-detected switch-on
  // still counts as "off" and must not widen the tolerance.
  const RobustCenter baseline = robust_center(quiet);
  const double onset_tol = kDepartureSigmas * baseline.sigma + 1e-9 * scale;

  // Move each detected switch back to the first sample that leaves the previous
  // regime, then by the ARX input delay. Detection fires only once the output
  // crosses the threshold, so the samples in between belong to the transient.
  std::vector<SwitchPoint> aligned;
  Index previous = start - 1;
  Index plateau_from = start;
  for (std::size_t e = 0; e < events.size(); ++e) {
    Index departure = events[e].k;
    double level = events[e].level;
    if (events[e].level > 0.0) {
      while (departure - 1 > previous && departure - 1 >= start &&
             std::abs(y.at(departure - 1) - baseline.median) > onset_tol) {
        --departure;
      }
      plateau_from = departure + label.settle_skip;
    } else {
      const Index off = events[e].k;
      const Index settled_from = std::min(events[e - 1].k + label.settle_skip, off - 1);
      std::vector<double> plateau;
      for (Index k = settled_from; k < off; ++k) plateau.push_back(y.at(k));
      const RobustCenter on = robust_center(plateau);
      const double tol = kDepartureSigmas * on.sigma + 1e-9 * scale;
      while (departure - 1 > previous && std::abs(y.at(departure - 1) - on.median) > tol) --departure;
      // On-level over the aligned plateau, free of the switch-off transient.
      const Index to = departure;
      if (to > plateau_from) {
        double sum = 0.0;
        for (Index k = plateau_from; k < to; ++k) sum += y.at(k);
        const double refined = sum / static_cast<double>(to - plateau_from);
        if (refined > 0.0) aligned.back().level = refined;
      }
      level = 0.0;
    }
    Index k = departure;
    if (events[e].level > 0.0 || !instant_off) k -= delay;
    k = std::max({k, start, previous + 1});
    aligned.push_back({k, level});
    previous = k;
  }
  const PiecewiseInput input(std::move(aligned));
  const SignalSeries u = input.to_signal(start, y.size(), y.sample_period());

  // A state reset at switch-off is not part of the linear dynamics; rows that
  // straddle one are left out of the regression.
  std::vector<char> mask(y.size(), 1);
  if (instant_off) {
    for (const auto& e : input.events()) {
      if (e.level != 0.0) continue;
      for (Index k = e.k; k < e.k + memory && k < y.end_index(); ++k) mask[static_cast<std::size_t>(k - start)] = 0;
    }
  }

  const ArxModel arx = fit_arx(y, u, orders.na, orders.nb, orders.delay, mask);
  const double peak = *std::max_element(y.values().begin(), y.values().end());
  std::optional<double> max_output;
  if (peak > 0.0) max_output = kMaxOutputFactor * peak;
  return arx_to_state_space(arx, label.device_name)
      .with_instant_off(instant_off)
      .with_bounds(std::nullopt, max_output);
}

}  // namespace dynilm
