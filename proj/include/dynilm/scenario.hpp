#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <vector>

#include "dynilm/model.hpp"
#include "dynilm/signal.hpp"

namespace dynilm {

/// A synthetic disaggregation problem with known ground truth.
struct Scenario {
  std::vector<DeviceModel> models;
  std::vector<PiecewiseInput> inputs;  // one per model
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  Index horizon = 450;

  void validate() const;
};

struct RenderedScenario {
  SignalSeries aggregate;
  std::vector<SignalSeries> truth_outputs;
};

/// Device outputs under their inputs plus i.i.d. Gaussian sensor noise; the
/// noise sample at k depends only on (seed, k).
RenderedScenario render(const Scenario& scenario);

/// Input at `level` for k in {first..last} inclusive, zero elsewhere.
PiecewiseInput pulse_input(Index first, Index last, double level);

inline constexpr double kReferenceNoiseStd = 0.02;
inline constexpr std::size_t kReferenceDevices = 5;
inline constexpr std::size_t kReferenceOrder = 3;

/// Five random third-order unit-gain instant-off devices, four of them driven
/// by overlapping pulses (1.2 on 20..100, 2 on 130..400, 0.6 on 180..300,
/// 1.8 on 250..350), the fifth never used; noise std 0.02, horizon 450.
Scenario paper_simulation(std::uint64_t seed);

/// {seed, noise_std, horizon, devices: [{model | model_ref, events: [[k, level], ...]}]}
nlohmann::json scenario_to_json(const Scenario& scenario);
/// `library` resolves `model_ref` entries by name.
Scenario scenario_from_json(const nlohmann::json& doc, const std::vector<DeviceModel>& library = {});

}  // namespace dynilm
