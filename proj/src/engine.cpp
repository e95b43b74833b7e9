#include "dynilm/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynilm/error.hpp"

namespace dynilm {

using nlohmann::json;

namespace {

constexpr double kMadConsistency = 0.6745;
constexpr double kThresholdSigmas = 5.0;
constexpr double kQuietSigmas = 3.0;

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  double m = *mid;
  if (xs.size() % 2 == 0) m = 0.5 * (m + *std::max_element(xs.begin(), mid));
  return m;
}

double mad_sigma(const std::vector<double>& diffs) {
  const double center = median(diffs);
  std::vector<double> dev(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) dev[i] = std::abs(diffs[i] - center);
  return median(std::move(dev)) / kMadConsistency;
}

bool candidate_before(const Candidate& x, const Candidate& y) {
  if (x.window_sse != y.window_sse) return x.window_sse < y.window_sse;
  if (x.k != y.k) return x.k < y.k;
  return x.device < y.device;
}

std::size_t pos(Index k, Index start) { return static_cast<std::size_t>(k - start); }

}  // namespace

void EngineParams::validate() const {
  if (deviation_threshold && !(*deviation_threshold > 0.0)) {
    throw ValidationError("deviation_threshold must be positive");
  }
  if (persistence < 1) throw ValidationError("persistence must be at least 1");
  if (lookahead < 1) throw ValidationError("lookahead N must be at least 1");
  if (backtrack < 0) throw ValidationError("backtrack window W must be nonnegative");
  if (min_on_duration < 0) throw ValidationError("min_on_duration must be nonnegative");
  if (!(min_level >= 0.0)) throw ValidationError("min_level must be nonnegative");
  if (beam_width < 1) throw ValidationError("beam_width must be at least 1");
}

std::string_view to_string(SwitchKind kind) { return kind == SwitchKind::on ? "on" : "off"; }

std::string_view to_string(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::increase:
      return "increase";
    case ChangeKind::decrease:
      return "decrease";
    case ChangeKind::none:
      break;
  }
  return "none";
}

double estimate_noise_std(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> diffs(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) diffs[i] = y[i + 1] - y[i];
  // Switching transients inflate the first pass; keep only quiet differences.
  const double rough = mad_sigma(diffs);
  const double center = median(diffs);
  std::vector<double> quiet;
  for (double d : diffs) {
    if (std::abs(d - center) <= kQuietSigmas * rough) quiet.push_back(d);
  }
  const double sigma = quiet.size() >= 2 ? mad_sigma(quiet) : rough;
  return sigma / std::sqrt(2.0);
}

double resolve_threshold(std::span<const double> y_m, const EngineParams& params) {
  if (params.deviation_threshold) return *params.deviation_threshold;
  double scale = 1.0;
  for (double v : y_m) scale = std::max(scale, std::abs(v));
  return std::max(kThresholdSigmas * estimate_noise_std(y_m), 1e-9 * scale);
}

ChangeDetection detect_change(const SignalSeries& y_m, const SignalSeries& y_hat, Index k, int persistence,
                              double threshold, Index floor) {
  const Index first = k - persistence + 1;
  if (persistence < 1 || first < floor || !y_m.contains(first) || !y_m.contains(k) || !y_hat.contains(first) ||
      !y_hat.contains(k)) {
    return {};
  }
  int sign = 0;
  for (Index i = first; i <= k; ++i) {
    const double r = y_m.at(i) - y_hat.at(i);
    if (!(std::abs(r) > threshold)) return {};
    const int s = r > 0.0 ? 1 : -1;
    if (sign != 0 && s != sign) return {};
    sign = s;
  }
  return {sign > 0 ? ChangeKind::increase : ChangeKind::decrease, first};
}

ChangeDetection detect_change(const SignalSeries& y_m, const SignalSeries& y_hat, Index k, const EngineParams& params) {
  return detect_change(y_m, y_hat, k, params.persistence, resolve_threshold(y_m.span(), params),
                       std::numeric_limits<Index>::min());
}

std::optional<OnFit> fit_on_event(std::span<const double> residual, std::span<const double> unit_response) {
  if (residual.size() != unit_response.size()) throw ValidationError("fit window length mismatch");
  double gg = 0.0;
  double ge = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    gg += unit_response[i] * unit_response[i];
    ge += unit_response[i] * residual[i];
  }
  if (!(gg > 0.0)) return std::nullopt;
  const double level = ge / gg;
  double sse = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const double r = residual[i] - level * unit_response[i];
    sse += r * r;
  }
  return OnFit{level, sse};
}

std::optional<OnFit> fit_on_event(const SignalSeries& residual, const DeviceModel& model, Index k_prime) {
  const SignalSeries window = residual.slice(k_prime, residual.end_index());
  if (window.empty()) throw ValidationError("empty fit window");
  const auto g = simulate_zero_state(model, std::vector<double>(window.size(), 1.0));
  return fit_on_event(window.span(), g);
}

std::optional<std::size_t> attribute_off_event(std::span<const OffContribution> eligible,
                                               std::span<const double> drop) {
  std::optional<std::size_t> best;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto& c : eligible) {
    if (c.profile.size() != drop.size()) throw ValidationError("contribution profile length mismatch");
    double distance = 0.0;
    for (std::size_t i = 0; i < drop.size(); ++i) distance += (drop[i] - c.profile[i]) * (drop[i] - c.profile[i]);
    if (!best || distance < best_distance || (distance == best_distance && c.device < *best)) {
      best = c.device;
      best_distance = distance;
    }
  }
  return best;
}

std::optional<std::size_t> attribute_off_event(std::span<const std::pair<std::size_t, double>> contributions,
                                               double drop) {
  std::vector<OffContribution> eligible;
  for (const auto& [device, value] : contributions) eligible.push_back({device, {value}});
  const double target = std::abs(drop);
  return attribute_off_event(eligible, std::span<const double>(&target, 1));
}

Engine::Engine(SignalSeries y_m, std::vector<DeviceModel> library, EngineParams params)
    : y_m_(std::move(y_m)), library_(std::move(library)), params_(params) {
  params_.validate();
  if (library_.empty()) throw ValidationError("device library is empty");
  if (y_m_.size() <= static_cast<std::size_t>(params_.lookahead + params_.backtrack)) {
    throw ValidationError("measured signal must be longer than N + W samples");
  }
  for (std::size_t i = 0; i < y_m_.size(); ++i) {
    if (!std::isfinite(y_m_[i])) {
      throw ValidationError("non-finite measurement at k=" + std::to_string(y_m_.start_index() + static_cast<Index>(i)));
    }
  }
  threshold_ = resolve_threshold(y_m_.span(), params_);
  lambda_ = threshold_ * threshold_ * params_.lookahead;
  const auto span = static_cast<std::size_t>(params_.backtrack + params_.lookahead + 1);
  for (const auto& m : library_) {
    dc_gains_.push_back(dc_gain(m));
    unit_steps_.push_back(simulate_zero_state(m, std::vector<double>(span, 1.0)));
  }
}

Configuration Engine::initial() const {
  Configuration c;
  const std::size_t d = library_.size();
  c.status.assign(d, DeviceStatus{});
  c.inputs.assign(d, PiecewiseInput{});
  c.outputs.assign(d, std::vector<double>(y_m_.size(), 0.0));
  c.total.assign(y_m_.size(), 0.0);
  c.floor = start();
  return c;
}

ChangeDetection Engine::detect(const Configuration& config, Index j) const {
  const Index first = j - params_.persistence + 1;
  if (first < config.floor || first < start() || j >= end()) return {};
  int sign = 0;
  for (Index i = first; i <= j; ++i) {
    const double r = y_m_.at(i) - config.total[pos(i, start())];
    if (!(std::abs(r) > threshold_)) return {};
    const int s = r > 0.0 ? 1 : -1;
    if (sign != 0 && s != sign) return {};
    sign = s;
  }
  return {sign > 0 ? ChangeKind::increase : ChangeKind::decrease, first};
}

std::pair<Index, Index> Engine::window(Index k_star) const {
  return {std::max(start(), k_star - params_.backtrack), std::min(end() - 1, k_star + params_.lookahead)};
}

bool Engine::admissible_level(std::size_t device, double level) const {
  const auto& m = library_[device];
  if (!(level > 0.0) || level < params_.min_level) return false;
  if (m.max_input() && level > *m.max_input()) return false;
  if (m.max_output() && dc_gains_[device] * level > *m.max_output()) return false;
  return true;
}

std::vector<Candidate> Engine::on_candidates(const Configuration& config, Index k_star) const {
  const auto [ws, we] = window(k_star);
  const Index last = config.events.empty() ? start() - 1 : config.events.back().k;
  const Index s = start();
  std::vector<Candidate> out;
  std::vector<double> residual(static_cast<std::size_t>(we - ws + 1));
  for (Index k = ws; k <= we; ++k) residual[pos(k, ws)] = y_m_.at(k) - config.total[pos(k, s)];

  for (std::size_t dev = 0; dev < library_.size(); ++dev) {
    if (config.status[dev].on) continue;
    for (Index kp = std::max(ws, last + 1); kp <= k_star; ++kp) {
      const std::size_t offset = pos(kp, ws);
      const std::size_t len = residual.size() - offset;
      const auto fit = fit_on_event(std::span<const double>(residual).subspan(offset),
                                    std::span<const double>(unit_steps_[dev]).first(len));
      if (!fit || !admissible_level(dev, fit->level)) continue;
      double sse = 0.0;
      for (std::size_t i = 0; i < residual.size(); ++i) {
        const double g = i >= offset ? unit_steps_[dev][i - offset] : 0.0;
        const double r = residual[i] - fit->level * g;
        sse += r * r;
      }
      out.push_back({dev, kp, SwitchKind::on, fit->level, sse});
    }
  }
  std::sort(out.begin(), out.end(), candidate_before);
  return out;
}

std::vector<Candidate> Engine::off_candidates(const Configuration& config, Index k_star) const {
  const auto [ws, we] = window(k_star);
  const Index last = config.events.empty() ? start() - 1 : config.events.back().k;
  const Index s = start();
  std::vector<Candidate> out;
  for (std::size_t dev = 0; dev < library_.size(); ++dev) {
    const auto& st = config.status[dev];
    if (!st.on) continue;
    const Index first = std::max({ws, last + 1, st.since + params_.min_on_duration});
    for (Index kp = first; kp <= k_star; ++kp) {
      const auto switched = simulate_device(dev, config.inputs[dev].with_event({kp, 0.0}));
      double sse = 0.0;
      for (Index k = ws; k <= we; ++k) {
        const std::size_t p = pos(k, s);
        const double r = y_m_.at(k) - (config.total[p] - config.outputs[dev][p] + switched[p]);
        sse += r * r;
      }
      out.push_back({dev, kp, SwitchKind::off, 0.0, sse});
    }
  }
  std::sort(out.begin(), out.end(), candidate_before);
  return out;
}

std::vector<Candidate> Engine::candidates(const Configuration& config, const ChangeDetection& change) const {
  if (change.kind == ChangeKind::none) return {};
  // The sign of the deviation is only a hint: a device with an inverse
  // response first pulls the aggregate the other way when it switches on.
  auto out = on_candidates(config, change.k_star);
  auto off = off_candidates(config, change.k_star);
  out.insert(out.end(), off.begin(), off.end());
  std::stable_sort(out.begin(), out.end(), candidate_before);
  return out;
}

std::vector<double> Engine::simulate_device(std::size_t device, const PiecewiseInput& input) const {
  return simulate_zero_state(library_[device], input.expand(start(), y_m_.size()));
}

Configuration Engine::apply(const Configuration& config, const Candidate& candidate, Index k_star) const {
  Configuration next = config;
  const std::size_t dev = candidate.device;
  next.inputs[dev] = config.inputs[dev].with_event({candidate.k, candidate.level});
  next.outputs[dev] = simulate_device(dev, next.inputs[dev]);
  if (candidate.kind == SwitchKind::on) {
    next.status[dev] = {true, candidate.level, candidate.k};
  } else {
    next.status[dev] = {false, 0.0, candidate.k};
  }
  std::fill(next.total.begin(), next.total.end(), 0.0);
  for (const auto& out : next.outputs) {
    for (std::size_t i = 0; i < out.size(); ++i) next.total[i] += out[i];
  }
  next.events.push_back({candidate.k, dev, candidate.kind, candidate.level});
  next.floor = k_star + 1;
  return next;
}

Configuration Engine::mark_unexplained(const Configuration& config, const ChangeDetection& change, Index j) const {
  Configuration next = config;
  next.unexplained.push_back({change.k_star, change.kind});
  next.floor = j + 1;
  return next;
}

double Engine::residual_sse(const Configuration& config, Index from, Index to) const {
  double sse = 0.0;
  for (Index k = std::max(from, start()); k < std::min(to, end()); ++k) {
    const double r = y_m_.at(k) - config.total[pos(k, start())];
    sse += r * r;
  }
  return sse;
}

double Engine::final_score(const Configuration& config) const {
  return residual_sse(config, start(), end()) + lambda_ * static_cast<double>(config.events.size());
}

std::optional<std::vector<double>> Engine::refit(const Configuration& config) const {
  // Output is linear in the on-levels once switch times are fixed, so all
  // levels can be re-estimated jointly against the whole record.
  std::vector<std::size_t> on_events;
  for (std::size_t e = 0; e < config.events.size(); ++e) {
    if (config.events[e].kind == SwitchKind::on) on_events.push_back(e);
  }
  if (on_events.empty()) return std::nullopt;
  const auto rows = static_cast<Eigen::Index>(y_m_.size());
  Eigen::MatrixXd basis(rows, static_cast<Eigen::Index>(on_events.size()));
  for (std::size_t col = 0; col < on_events.size(); ++col) {
    const auto& ev = config.events[on_events[col]];
    Index off = end();
    for (std::size_t e = on_events[col] + 1; e < config.events.size(); ++e) {
      if (config.events[e].device == ev.device) {
        off = config.events[e].k;
        break;
      }
    }
    const auto pulse = PiecewiseInput(off < end() ? std::vector<SwitchPoint>{{ev.k, 1.0}, {off, 0.0}}
                                                  : std::vector<SwitchPoint>{{ev.k, 1.0}});
    const auto response = simulate_device(ev.device, pulse);
    basis.col(static_cast<Eigen::Index>(col)) = Eigen::Map<const Eigen::VectorXd>(response.data(), rows);
  }
  const Eigen::Map<const Eigen::VectorXd> target(y_m_.values().data(), rows);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  if (qr.rank() < basis.cols()) return std::nullopt;
  const Eigen::VectorXd levels = qr.solve(target);

  std::vector<double> out(config.events.size(), 0.0);
  for (std::size_t col = 0; col < on_events.size(); ++col) {
    const double level = levels(static_cast<Eigen::Index>(col));
    if (!std::isfinite(level) || !admissible_level(config.events[on_events[col]].device, level)) return std::nullopt;
    out[on_events[col]] = level;
  }
  return out;
}

DisaggregationResult Engine::finish(const Configuration& config) const {
  DisaggregationResult result;
  result.params = params_;
  result.threshold = threshold_;
  result.events = config.events;
  result.unexplained = config.unexplained;

  if (params_.refit_levels) {
    if (const auto levels = refit(config)) {
      for (std::size_t e = 0; e < result.events.size(); ++e) result.events[e].level = (*levels)[e];
    }
  }

  const std::size_t d = library_.size();
  std::vector<std::vector<SwitchPoint>> per_device(d);
  for (const auto& ev : result.events) per_device[ev.device].push_back({ev.k, ev.level});
  std::vector<double> total(y_m_.size(), 0.0);
  for (std::size_t dev = 0; dev < d; ++dev) {
    result.device_names.push_back(library_[dev].name());
    result.inputs.emplace_back(std::move(per_device[dev]));
    auto y = simulate_device(dev, result.inputs.back());
    for (std::size_t i = 0; i < y.size(); ++i) total[i] += y[i];
    result.outputs.emplace_back(std::move(y), y_m_.sample_period(), start());
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < total.size(); ++i) sse += (y_m_[i] - total[i]) * (y_m_[i] - total[i]);
  result.residual_rms = std::sqrt(sse / static_cast<double>(total.size()));
  result.score = sse + lambda_ * static_cast<double>(result.events.size());
  result.total = SignalSeries(std::move(total), y_m_.sample_period(), start());
  return result;
}

std::optional<Candidate> select_on_candidate(const Engine& engine, const Configuration& config, Index k_star) {
  auto candidates = engine.on_candidates(config, k_star);
  if (candidates.empty()) return std::nullopt;
  return candidates.front();
}

DisaggregationResult disaggregate(const SignalSeries& y_m, const std::vector<DeviceModel>& library,
                                  const EngineParams& params) {
  const Engine engine(y_m, library, params);
  Configuration config = engine.initial();
  for (Index j = engine.start(); j < engine.end(); ++j) {
    const auto change = engine.detect(config, j);
    if (change.kind == ChangeKind::none) continue;
    const auto options = engine.candidates(config, change);
    config = options.empty() ? engine.mark_unexplained(config, change, j)
                             : engine.apply(config, options.front(), change.k_star);
  }
  return engine.finish(config);
}

DisaggregationResult disaggregate_beam(const SignalSeries& y_m, const std::vector<DeviceModel>& library,
                                       const EngineParams& params) {
  const Engine engine(y_m, library, params);
  const auto width = static_cast<std::size_t>(params.beam_width);
  const double lambda = engine.lambda();

  // Hypotheses are compared on the data they have all accounted for: the
  // squared residual before the current detection run plus lambda per event.
  // A child inherits its parent's score plus one lambda plus how much worse it
  // fits the window than its best sibling, so siblings keep the greedy order.
  struct Ranked {
    Configuration config;
    double score = 0.0;
    double fit = 0.0;
  };
  std::vector<Ranked> beam;
  beam.push_back({engine.initial(), 0.0, 0.0});

  for (Index j = engine.start(); j < engine.end(); ++j) {
    std::vector<Ranked> next;
    bool branched = false;
    const Index committed = j - params.persistence + 1;
    for (auto& h : beam) {
      const double base = engine.residual_sse(h.config, engine.start(), committed) +
                          lambda * static_cast<double>(h.config.events.size());
      const auto change = engine.detect(h.config, j);
      if (change.kind == ChangeKind::none) {
        next.push_back({std::move(h.config), base, 0.0});
        continue;
      }
      const auto options = engine.candidates(h.config, change);
      if (options.empty()) {
        next.push_back({engine.mark_unexplained(h.config, change, j), base, 0.0});
        continue;
      }
      branched = true;
      const double best_fit = options.front().window_sse;
      for (const auto& c : options) {
        next.push_back(
            {engine.apply(h.config, c, change.k_star), base + lambda + (c.window_sse - best_fit), c.window_sse});
      }
    }
    if (branched) {
      std::stable_sort(next.begin(), next.end(), [](const Ranked& x, const Ranked& y) {
        if (x.score != y.score) return x.score < y.score;
        return x.fit < y.fit;
      });
      std::vector<Ranked> kept;
      for (auto& h : next) {
        if (kept.size() == width) break;
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const Ranked& k) {
          return k.config.floor == h.config.floor && k.config.events == h.config.events;
        });
        if (!duplicate) kept.push_back(std::move(h));
      }
      next = std::move(kept);
    }
    beam = std::move(next);
  }

  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < beam.size(); ++i) {
    const double score = engine.final_score(beam[i].config);
    if (score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return engine.finish(beam[best].config);
}

json params_to_json(const EngineParams& params, double threshold) {
  return json{{"deviation_threshold", threshold},
              {"persistence", params.persistence},
              {"lookahead", params.lookahead},
              {"backtrack", params.backtrack},
              {"min_on_duration", params.min_on_duration},
              {"min_level", params.min_level},
              {"beam_width", params.beam_width},
              {"refit_levels", params.refit_levels}};
}

json result_to_json(const DisaggregationResult& result) {
  json events = json::array();
  for (const auto& e : result.events) {
    events.push_back(json{{"k", e.k},
                          {"device", e.device},
                          {"device_name", result.device_names.at(e.device)},
                          {"kind", to_string(e.kind)},
                          {"level", e.level}});
  }
  json unexplained = json::array();
  for (const auto& u : result.unexplained) unexplained.push_back(json{{"k", u.k}, {"kind", to_string(u.kind)}});
  return json{{"params", params_to_json(result.params, result.threshold)},
              {"devices", result.device_names},
              {"events", std::move(events)},
              {"residual_rms", result.residual_rms},
              {"unexplained", std::move(unexplained)}};
}

ResultSummary result_summary_from_json(const json& doc) {
  try {
    ResultSummary out;
    out.device_names = doc.at("devices").get<std::vector<std::string>>();
    out.residual_rms = doc.at("residual_rms").get<double>();
    for (const auto& e : doc.at("events")) {
      SwitchEvent ev;
      ev.k = e.at("k").get<Index>();
      ev.device = e.at("device").get<std::size_t>();
      const auto kind = e.at("kind").get<std::string>();
      if (kind != "on" && kind != "off") throw ValidationError("event kind must be 'on' or 'off'");
      ev.kind = kind == "on" ? SwitchKind::on : SwitchKind::off;
      ev.level = e.at("level").get<double>();
      if (ev.device >= out.device_names.size()) throw ValidationError("event refers to an unknown device");
      out.events.push_back(ev);
    }
    for (const auto& u : doc.value("unexplained", json::array())) {
      const auto kind = u.at("kind").get<std::string>();
      out.unexplained.push_back(
          {u.at("k").get<Index>(), kind == "increase" ? ChangeKind::increase : ChangeKind::decrease});
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("result file: ") + e.what());
  }
}

}  // namespace dynilm
