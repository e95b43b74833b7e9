#include "dynilm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "dynilm/error.hpp"

namespace dynilm {

using nlohmann::json;

std::vector<SwitchEvent> events_from_inputs(const std::vector<PiecewiseInput>& inputs) {
  std::vector<SwitchEvent> out;
  for (std::size_t dev = 0; dev < inputs.size(); ++dev) {
    for (const auto& e : inputs[dev].events()) {
      out.push_back({e.k, dev, e.level > 0.0 ? SwitchKind::on : SwitchKind::off, e.level});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const SwitchEvent& x, const SwitchEvent& y) {
    return std::tie(x.k, x.device) < std::tie(y.k, y.device);
  });
  return out;
}

Truth truth_from_scenario(const Scenario& scenario) {
  auto rendered = render(scenario);
  Truth t;
  for (const auto& m : scenario.models) t.device_names.push_back(m.name());
  t.events = events_from_inputs(scenario.inputs);
  t.outputs = std::move(rendered.truth_outputs);
  t.aggregate = std::move(rendered.aggregate);
  return t;
}

EventMatch match_events(const std::vector<SwitchEvent>& truth, const std::vector<SwitchEvent>& estimate, Index window) {
  struct Pair {
    Index gap;
    std::size_t t;
    std::size_t e;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::size_t e = 0; e < estimate.size(); ++e) {
      if (truth[t].device != estimate[e].device || truth[t].kind != estimate[e].kind) continue;
      const Index gap = truth[t].k > estimate[e].k ? truth[t].k - estimate[e].k : estimate[e].k - truth[t].k;
      if (gap <= window) pairs.push_back({gap, t, e});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& x, const Pair& y) { return std::tie(x.gap, x.t, x.e) < std::tie(y.gap, y.t, y.e); });
  std::vector<char> used_t(truth.size(), 0);
  std::vector<char> used_e(estimate.size(), 0);
  EventMatch m;
  for (const auto& p : pairs) {
    if (used_t[p.t] || used_e[p.e]) continue;
    used_t[p.t] = used_e[p.e] = 1;
    m.pairs.emplace_back(p.t, p.e);
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!used_t[t]) m.unmatched_truth.push_back(t);
  }
  for (std::size_t e = 0; e < estimate.size(); ++e) {
    if (!used_e[e]) m.unmatched_estimate.push_back(e);
  }
  return m;
}

namespace {

void require_same_range(const SignalSeries& a, const SignalSeries& b, const std::string& what) {
  if (a.start_index() != b.start_index() || a.size() != b.size()) {
    throw ValidationError(what + ": truth covers [" + std::to_string(b.start_index()) + ", " +
                          std::to_string(b.end_index()) + ") but estimate covers [" +
                          std::to_string(a.start_index()) + ", " + std::to_string(a.end_index()) + ")");
  }
}

}  // namespace

Metrics score(const DisaggregationResult& result, const Truth& truth, Index match_window) {
  if (match_window < 0) throw ValidationError("match window must be nonnegative");
  if (result.outputs.size() != truth.outputs.size()) {
    throw ValidationError("estimate has " + std::to_string(result.outputs.size()) + " devices, truth has " +
                          std::to_string(truth.outputs.size()));
  }
  require_same_range(result.total, truth.aggregate, "aggregate");
  for (std::size_t i = 0; i < truth.outputs.size(); ++i) {
    require_same_range(result.outputs[i], truth.outputs[i], "device " + std::to_string(i));
  }

  Metrics m;
  const auto match = match_events(truth.events, result.events, match_window);
  double gap_sum = 0.0;
  for (const auto& [t, e] : match.pairs) {
    const auto& te = truth.events[t];
    const auto& ee = result.events[e];
    gap_sum += std::abs(static_cast<double>(te.k - ee.k));
    if (te.kind == SwitchKind::on) {
      m.level_errors.push_back({te.device, te.k, te.level, ee.level, std::abs(ee.level - te.level) / te.level});
    }
  }
  const auto matched = static_cast<double>(match.pairs.size());
  m.switch_time_mae = match.pairs.empty() ? 0.0 : gap_sum / matched;
  m.precision = result.events.empty() ? 1.0 : matched / static_cast<double>(result.events.size());
  m.recall = truth.events.empty() ? 1.0 : matched / static_cast<double>(truth.events.size());

  for (std::size_t i = 0; i < truth.outputs.size(); ++i) {
    double err = 0.0;
    double energy = 0.0;
    for (std::size_t k = 0; k < truth.outputs[i].size(); ++k) {
      err += std::abs(result.outputs[i][k] - truth.outputs[i][k]);
      energy += truth.outputs[i][k];
    }
    const std::string name = i < truth.device_names.size() ? truth.device_names[i] : "device" + std::to_string(i + 1);
    // A device that never ran: any estimated energy counts as total error.
    m.per_device_energy_error[name] = energy > 0.0 ? err / energy : (err > 0.0 ? 1.0 : 0.0);
  }

  double sse = 0.0;
  for (std::size_t k = 0; k < truth.aggregate.size(); ++k) {
    const double r = result.total[k] - truth.aggregate[k];
    sse += r * r;
  }
  m.aggregate_rmse = truth.aggregate.empty() ? 0.0 : std::sqrt(sse / static_cast<double>(truth.aggregate.size()));
  return m;
}

json metrics_to_json(const Metrics& metrics) {
  json levels = json::array();
  for (const auto& l : metrics.level_errors) {
    levels.push_back(json{{"device", l.device}, {"k", l.k}, {"truth", l.truth}, {"estimate", l.estimate},
                          {"relative_error", l.relative}});
  }
  json energy = json::object();
  for (const auto& [name, value] : metrics.per_device_energy_error) energy[name] = value;
  return json{{"switch_time_mae", metrics.switch_time_mae},
              {"precision", metrics.precision},
              {"recall", metrics.recall},
              {"level_errors", std::move(levels)},
              {"per_device_energy_error", std::move(energy)},
              {"aggregate_rmse", metrics.aggregate_rmse}};
}

DisaggregationResult result_from_summary(const ResultSummary& summary, const std::vector<DeviceModel>& library,
                                         const SignalSeries& measured) {
  if (summary.device_names.size() != library.size()) {
    throw ValidationError("result lists " + std::to_string(summary.device_names.size()) + " devices, library has " +
                          std::to_string(library.size()));
  }
  DisaggregationResult r;
  r.device_names = summary.device_names;
  r.events = summary.events;
  r.unexplained = summary.unexplained;
  std::vector<std::vector<SwitchPoint>> per_device(library.size());
  for (const auto& e : summary.events) per_device.at(e.device).push_back({e.k, e.level});
  std::vector<double> total(measured.size(), 0.0);
  for (std::size_t i = 0; i < library.size(); ++i) {
    r.inputs.emplace_back(std::move(per_device[i]));
    auto y = simulate_zero_state(library[i], r.inputs.back().expand(measured.start_index(), measured.size()));
    for (std::size_t k = 0; k < y.size(); ++k) total[k] += y[k];
    r.outputs.emplace_back(std::move(y), measured.sample_period(), measured.start_index());
  }
  double sse = 0.0;
  for (std::size_t k = 0; k < total.size(); ++k) sse += (measured[k] - total[k]) * (measured[k] - total[k]);
  r.residual_rms = total.empty() ? 0.0 : std::sqrt(sse / static_cast<double>(total.size()));
  r.total = SignalSeries(std::move(total), measured.sample_period(), measured.start_index());
  return r;
}

}  // namespace dynilm
