#pragma once

// Frozen instances shared by the beam tests and the acceptance binary.

#include "dynilm/engine.hpp"
#include "dynilm/rng.hpp"
#include "dynilm/scenario.hpp"

namespace dynilm::testing {

/// Two instant-off models with the same fast rise. "b" adds a slow negative
/// lobe (modes 0.98 and 0.97) that only shows after the lookahead window, so a
/// short-window fit cannot tell them apart. Both have unit DC gain.
inline std::vector<DeviceModel> look_alike_pair(double lobe = 3.0) {
  DeviceOptions opts;
  opts.instant_off = true;
  Eigen::MatrixXd a1(1, 1);
  a1 << 0.5;
  Eigen::VectorXd b1(1), c1(1);
  b1 << 0.5;
  c1 << 1.0;
  Eigen::MatrixXd a3 = Eigen::MatrixXd::Zero(3, 3);
  a3(0, 0) = 0.5;
  a3(1, 1) = 0.98;
  a3(2, 2) = 0.97;
  Eigen::VectorXd b3(3), c3(3);
  b3 << 0.5, 0.02, 0.03;
  c3 << 1.0, lobe, -lobe;
  return {DeviceModel("a", a1, b1, c1, 0.0, opts), DeviceModel("b", a3, b3, c3, 0.0, opts)};
}

/// Device "b" switches on at k = 10 with level 1.5. With noise seed 9 the
/// short-window fit prefers "a"; the slow lobe only shows later.
inline Scenario look_alike_scenario() {
  Scenario sc;
  sc.horizon = 60;
  sc.noise_std = 0.03;
  sc.seed = 9;
  sc.models = look_alike_pair();
  sc.inputs = {PiecewiseInput{}, PiecewiseInput({{10, 1.5}})};
  return sc;
}

inline EngineParams look_alike_params(int beam_width) {
  EngineParams p;
  p.deviation_threshold = 0.1;
  p.lookahead = 3;
  p.backtrack = 1;
  p.refit_levels = false;
  p.beam_width = beam_width;
  return p;
}

/// Two random instant-off devices and three true events: a pulse on "a" that
/// brackets an on-switch of "b".
inline Scenario small_tree_scenario(std::uint64_t seed) {
  CounterRng rng(seed, 777);
  Scenario sc;
  sc.horizon = 60;
  sc.noise_std = 0.01;
  sc.seed = seed;
  sc.models = {random_stable_model(3, 1000 + 2 * seed, true).with_name("a"),
               random_stable_model(3, 1001 + 2 * seed, true).with_name("b")};
  const Index on_a = 5 + static_cast<Index>(rng.next_uniform() * 5);
  const Index on_b = on_a + 10 + static_cast<Index>(rng.next_uniform() * 10);
  const Index off_a = on_b + 10 + static_cast<Index>(rng.next_uniform() * 10);
  const double level_a = 1.0 + rng.next_uniform() * 2;
  const double level_b = 1.0 + rng.next_uniform() * 2;
  sc.inputs = {pulse_input(on_a, off_a - 1, level_a), PiecewiseInput({{on_b, level_b}})};
  return sc;
}

inline EngineParams small_tree_params() {
  EngineParams p;
  p.deviation_threshold = 0.5;
  p.lookahead = 8;
  p.backtrack = 0;
  p.refit_levels = false;
  return p;
}

}  // namespace dynilm::testing
