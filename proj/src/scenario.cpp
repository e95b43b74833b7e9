#include "dynilm/scenario.hpp"

#include <algorithm>

#include "dynilm/error.hpp"
#include "dynilm/library_io.hpp"
#include "dynilm/rng.hpp"

namespace dynilm {

using nlohmann::json;

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

}  // namespace

void Scenario::validate() const {
  if (models.size() != inputs.size()) throw ValidationError("scenario needs exactly one input per model");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be nonnegative");
  if (horizon < 1) throw ValidationError("horizon must be positive");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].empty()) continue;
    if (inputs[i].events().front().k < 0 || inputs[i].events().back().k > horizon) {
      throw ValidationError("events of device " + std::to_string(i) + " fall outside [0, horizon]");
    }
  }
}

RenderedScenario render(const Scenario& scenario) {
  scenario.validate();
  const auto length = static_cast<std::size_t>(scenario.horizon);
  RenderedScenario out;
  out.truth_outputs.reserve(scenario.models.size());
  std::vector<double> total(length, 0.0);
  for (std::size_t i = 0; i < scenario.models.size(); ++i) {
    auto y = simulate_zero_state(scenario.models[i], scenario.inputs[i].to_signal(0, length));
    for (std::size_t k = 0; k < length; ++k) total[k] += y[k];
    out.truth_outputs.push_back(std::move(y));
  }
  if (scenario.noise_std > 0.0) {
    const CounterRng rng(scenario.seed, kNoiseStream);
    for (std::size_t k = 0; k < length; ++k) total[k] += scenario.noise_std * rng.normal(k);
  }
  out.aggregate = SignalSeries(std::move(total));
  return out;
}

PiecewiseInput pulse_input(Index first, Index last, double level) {
  if (last < first) throw ValidationError("pulse must end at or after its start");
  return PiecewiseInput({{first, level}, {last + 1, 0.0}});
}

Scenario paper_simulation(std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.noise_std = kReferenceNoiseStd;
  s.horizon = 450;
  for (std::size_t i = 0; i < kReferenceDevices; ++i) {
    s.models.push_back(random_stable_model(kReferenceOrder, seed + i, /*instant_off=*/true)
                           .with_name("device" + std::to_string(i + 1)));
  }
  s.inputs = {pulse_input(20, 100, 1.2), pulse_input(130, 400, 2.0), pulse_input(180, 300, 0.6),
              pulse_input(250, 350, 1.8), PiecewiseInput{}};
  return s;
}

json scenario_to_json(const Scenario& scenario) {
  json devices = json::array();
  for (std::size_t i = 0; i < scenario.models.size(); ++i) {
    json events = json::array();
    for (const auto& e : scenario.inputs[i].events()) events.push_back(json::array({e.k, e.level}));
    devices.push_back(json{{"model", model_to_json(scenario.models[i])}, {"events", std::move(events)}});
  }
  return json{{"seed", scenario.seed},
              {"noise_std", scenario.noise_std},
              {"horizon", scenario.horizon},
              {"devices", std::move(devices)}};
}

Scenario scenario_from_json(const json& doc, const std::vector<DeviceModel>& library) {
  try {
    Scenario s;
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.noise_std = doc.at("noise_std").get<double>();
    s.horizon = doc.value("horizon", Index{450});
    for (const auto& dev : doc.at("devices")) {
      if (dev.contains("model")) {
        s.models.push_back(model_from_json(dev.at("model")));
      } else if (dev.contains("model_ref")) {
        const auto ref = dev.at("model_ref").get<std::string>();
        auto it = std::find_if(library.begin(), library.end(), [&](const DeviceModel& m) { return m.name() == ref; });
        if (it == library.end()) throw ValidationError("model_ref '" + ref + "' not found in library");
        s.models.push_back(*it);
      } else {
        throw ValidationError("scenario device needs 'model' or 'model_ref'");
      }
      std::vector<SwitchPoint> events;
      for (const auto& e : dev.value("events", json::array())) {
        if (!e.is_array() || e.size() != 2) throw ValidationError("scenario events must be [k, level] pairs");
        events.push_back({e.at(0).get<Index>(), e.at(1).get<double>()});
      }
      s.inputs.emplace_back(std::move(events));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

}  // namespace dynilm
