#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dynilm/model.hpp"
#include "dynilm/signal.hpp"

namespace dynilm {

struct EngineParams {
  /// Residual magnitude that counts as a deviation; unset means
  /// 5 x the robust noise estimate of the measured signal.
  std::optional<double> deviation_threshold;
  int persistence = 2;      // consecutive violating samples needed
  int lookahead = 15;       // N: samples past k* used to fit an on-event
  int backtrack = 5;        // W: candidate switch times k' in [k* - W, k*]
  int min_on_duration = 3;  // samples a device stays on before it may switch off
  double min_level = 0.0;
  int beam_width = 1;
  bool refit_levels = true;  // joint least-squares refit of all levels at the end

  void validate() const;
};

enum class ChangeKind { none, increase, decrease };

struct ChangeDetection {
  ChangeKind kind = ChangeKind::none;
  Index k_star = 0;  // first index of the violating run
};

enum class SwitchKind { on, off };

struct SwitchEvent {
  Index k = 0;
  std::size_t device = 0;
  SwitchKind kind = SwitchKind::on;
  double level = 0.0;

  bool operator==(const SwitchEvent&) const = default;
};

struct UnexplainedEvent {
  Index k = 0;
  ChangeKind kind = ChangeKind::none;

  bool operator==(const UnexplainedEvent&) const = default;
};

std::string_view to_string(SwitchKind kind);
std::string_view to_string(ChangeKind kind);

/// Robust white-noise level: MAD of the first difference over quiet samples,
/// divided by sqrt(2) and the 0.6745 consistency factor.
double estimate_noise_std(std::span<const double> y);
/// Explicit threshold, or 5 x estimate_noise_std with a tiny floor for noiseless data.
double resolve_threshold(std::span<const double> y_m, const EngineParams& params);

/// Looks at the `persistence` samples ending at k. A change is reported only
/// when all of them exceed the threshold with the same sign and the run does
/// not start before `floor`.
ChangeDetection detect_change(const SignalSeries& y_m, const SignalSeries& y_hat, Index k, int persistence,
                              double threshold, Index floor);
ChangeDetection detect_change(const SignalSeries& y_m, const SignalSeries& y_hat, Index k, const EngineParams& params);

struct OnFit {
  double level = 0.0;
  double sse = 0.0;
};

/// Closed-form least-squares amplitude of a unit response against a residual
/// window: level = <G, e> / <G, G>. Returns nullopt when G is identically zero.
std::optional<OnFit> fit_on_event(std::span<const double> residual, std::span<const double> unit_response);
/// Residual window [k', end) against the model's zero-state unit step started at k'.
std::optional<OnFit> fit_on_event(const SignalSeries& residual, const DeviceModel& model, Index k_prime);

/// On-device closest to the observed drop. Each entry pairs a device index with
/// its contribution profile; the drop profile has the same length. For
/// length-one profiles this is plain nearest contribution. Ties go to the lower
/// device index.
struct OffContribution {
  std::size_t device = 0;
  std::vector<double> profile;
};
std::optional<std::size_t> attribute_off_event(std::span<const OffContribution> eligible,
                                               std::span<const double> drop);
std::optional<std::size_t> attribute_off_event(std::span<const std::pair<std::size_t, double>> contributions,
                                               double drop);

struct DeviceStatus {
  bool on = false;
  double level = 0.0;
  Index since = 0;
};

/// One node of the configuration tree: every device's status and input so far,
/// the output predicted under that configuration over the whole horizon, and
/// the event log that led here.
struct Configuration {
  std::vector<DeviceStatus> status;
  std::vector<PiecewiseInput> inputs;
  std::vector<std::vector<double>> outputs;
  std::vector<double> total;
  std::vector<SwitchEvent> events;
  std::vector<UnexplainedEvent> unexplained;
  Index floor = 0;  // earliest start of the next violating run
};

/// A possible switch explaining a detected change, scored by the squared
/// residual over the common window [k* - W, k* + N].
struct Candidate {
  std::size_t device = 0;
  Index k = 0;
  SwitchKind kind = SwitchKind::on;
  double level = 0.0;
  double window_sse = 0.0;
};

struct DisaggregationResult {
  std::vector<std::string> device_names;
  std::vector<PiecewiseInput> inputs;   // estimated u_i
  std::vector<SignalSeries> outputs;    // estimated y_i
  SignalSeries total;                   // sum of outputs, device order
  double residual_rms = 0.0;
  double score = 0.0;                   // squared residual + lambda * events
  double threshold = 0.0;
  EngineParams params;
  std::vector<SwitchEvent> events;
  std::vector<UnexplainedEvent> unexplained;
};

/// Holds one measured signal, the device library and resolved parameters, and
/// exposes the tree operations (detect, branch, apply) used by the greedy and
/// beam drivers.
class Engine {
 public:
  Engine(SignalSeries y_m, std::vector<DeviceModel> library, EngineParams params);

  const SignalSeries& measured() const noexcept { return y_m_; }
  const std::vector<DeviceModel>& library() const noexcept { return library_; }
  const EngineParams& params() const noexcept { return params_; }
  double threshold() const noexcept { return threshold_; }
  /// Cardinality weight in the hypothesis score: threshold^2 * N.
  double lambda() const noexcept { return lambda_; }

  Configuration initial() const;
  /// Change test at detection index j for this configuration.
  ChangeDetection detect(const Configuration& config, Index j) const;
  std::pair<Index, Index> window(Index k_star) const;

  /// All admissible on-switches for devices that are off, best first
  /// (window_sse, then earlier k', then lower device index).
  std::vector<Candidate> on_candidates(const Configuration& config, Index k_star) const;
  /// All admissible off-switches for devices that are on, same ordering.
  std::vector<Candidate> off_candidates(const Configuration& config, Index k_star) const;
  std::vector<Candidate> candidates(const Configuration& config, const ChangeDetection& change) const;

  Configuration apply(const Configuration& config, const Candidate& candidate, Index k_star) const;
  Configuration mark_unexplained(const Configuration& config, const ChangeDetection& change, Index j) const;

  double residual_sse(const Configuration& config, Index from, Index to) const;
  double final_score(const Configuration& config) const;

  DisaggregationResult finish(const Configuration& config) const;

  Index start() const noexcept { return y_m_.start_index(); }
  Index end() const noexcept { return y_m_.end_index(); }

 private:
  std::vector<double> simulate_device(std::size_t device, const PiecewiseInput& input) const;
  std::optional<std::vector<double>> refit(const Configuration& config) const;
  bool admissible_level(std::size_t device, double level) const;

  SignalSeries y_m_;
  std::vector<DeviceModel> library_;
  EngineParams params_;
  double threshold_ = 0.0;
  double lambda_ = 0.0;
  std::vector<double> dc_gains_;
  std::vector<std::vector<double>> unit_steps_;  // length W + N + 1
};

/// Best surviving on-switch for an increase detected at k_star, if any.
std::optional<Candidate> select_on_candidate(const Engine& engine, const Configuration& config, Index k_star);

/// Single-pass greedy disaggregation.
DisaggregationResult disaggregate(const SignalSeries& y_m, const std::vector<DeviceModel>& library,
                                  const EngineParams& params = {});

/// Beam search over the configuration tree keeping params.beam_width
/// hypotheses ranked by squared residual + lambda * event count. Identical to
/// disaggregate when beam_width is 1.
DisaggregationResult disaggregate_beam(const SignalSeries& y_m, const std::vector<DeviceModel>& library,
                                       const EngineParams& params);

/// {params, devices, events: [{k, device, device_name, kind, level}], residual_rms, unexplained}
nlohmann::json result_to_json(const DisaggregationResult& result);
nlohmann::json params_to_json(const EngineParams& params, double threshold);

struct ResultSummary {
  std::vector<std::string> device_names;
  std::vector<SwitchEvent> events;
  std::vector<UnexplainedEvent> unexplained;
  double residual_rms = 0.0;
};
ResultSummary result_summary_from_json(const nlohmann::json& doc);

}  // namespace dynilm
