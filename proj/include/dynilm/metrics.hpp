#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynilm/engine.hpp"
#include "dynilm/scenario.hpp"

namespace dynilm {

/// Ground truth for scoring: per-device true events, noiseless device outputs
/// and the measured aggregate.
struct Truth {
  std::vector<std::string> device_names;
  std::vector<SwitchEvent> events;  // time order
  std::vector<SignalSeries> outputs;
  SignalSeries aggregate;
};

Truth truth_from_scenario(const Scenario& scenario);
/// Time-ordered on/off events of a set of inputs, one device per input.
std::vector<SwitchEvent> events_from_inputs(const std::vector<PiecewiseInput>& inputs);

struct EventMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (truth index, estimate index)
  std::vector<std::size_t> unmatched_truth;
  std::vector<std::size_t> unmatched_estimate;
};

/// Nearest-time greedy matching: closest pairs first (ties by truth index, then
/// estimate index), same device and kind only, |dk| <= window.
EventMatch match_events(const std::vector<SwitchEvent>& truth, const std::vector<SwitchEvent>& estimate,
                        Index window = 10);

struct LevelError {
  std::size_t device = 0;
  Index k = 0;
  double truth = 0.0;
  double estimate = 0.0;
  double relative = 0.0;
};

struct Metrics {
  double switch_time_mae = 0.0;  // samples, over matched pairs
  std::vector<LevelError> level_errors;  // matched on-events
  std::map<std::string, double> per_device_energy_error;
  double aggregate_rmse = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Devices are paired by position. Estimate outputs and truth outputs must
/// cover the same index range.
Metrics score(const DisaggregationResult& result, const Truth& truth, Index match_window = 10);

nlohmann::json metrics_to_json(const Metrics& metrics);

/// Rebuilds per-device inputs and outputs from a stored result file, given the
/// library it was computed with and the measured signal.
DisaggregationResult result_from_summary(const ResultSummary& summary, const std::vector<DeviceModel>& library,
                                         const SignalSeries& measured);

}  // namespace dynilm
