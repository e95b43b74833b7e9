#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "dynilm/engine.hpp"
#include "dynilm/error.hpp"
#include "dynilm/rng.hpp"
#include "dynilm/scenario.hpp"

using namespace dynilm;

namespace {

constexpr Index kNoFloor = std::numeric_limits<Index>::min();

DeviceModel first_order(std::string name, double pole = 0.5) {
  Eigen::MatrixXd a(1, 1);
  a << pole;
  Eigen::VectorXd b(1), c(1);
  b << 1.0 - pole;
  c << 1.0;
  return DeviceModel(std::move(name), a, b, c);
}

SignalSeries zeros(std::size_t n) { return SignalSeries(std::vector<double>(n, 0.0)); }

// Result consistency, sparsity accounting, one event per step, alternation and bounds.
void check_result_invariants(const DisaggregationResult& r, const std::vector<DeviceModel>& library,
                             const SignalSeries& y_m) {
  REQUIRE(r.outputs.size() == library.size());
  REQUIRE(r.inputs.size() == library.size());
  std::size_t cardinality = 0;
  for (std::size_t i = 0; i < library.size(); ++i) {
    const auto u = r.inputs[i].to_signal(y_m.start_index(), y_m.size());
    CHECK(simulate_zero_state(library[i], u) == r.outputs[i]);
    cardinality += r.inputs[i].cardinality();
  }
  for (std::size_t k = 0; k < y_m.size(); ++k) {
    double sum = 0.0;
    for (const auto& y : r.outputs) sum += y[k];
    CHECK(r.total[k] == sum);
  }
  CHECK(cardinality == r.events.size());

  std::set<Index> times;
  std::map<std::size_t, SwitchKind> last;
  for (const auto& e : r.events) {
    CHECK(times.insert(e.k).second);
    const bool was_on = last.count(e.device) && last[e.device] == SwitchKind::on;
    CHECK(was_on == (e.kind == SwitchKind::off));
    last[e.device] = e.kind;
    if (e.kind == SwitchKind::on) {
      const auto& m = library[e.device];
      CHECK(e.level > 0.0);
      if (m.max_input()) CHECK(e.level <= *m.max_input());
      if (m.max_output()) CHECK(dc_gain(m) * e.level <= *m.max_output() * (1.0 + 1e-12));
    } else {
      CHECK(e.level == 0.0);
    }
  }
  CHECK(std::is_sorted(r.events.begin(), r.events.end(),
                       [](const SwitchEvent& a, const SwitchEvent& b) { return a.k < b.k; }));
}

Scenario two_device_scenario(std::uint64_t seed, double noise) {
  CounterRng rng(seed, 31);
  Scenario sc;
  sc.seed = seed;
  sc.noise_std = noise;
  sc.horizon = 160;
  sc.models = {random_stable_model(3, 500 + 2 * seed, true).with_name("a"),
               random_stable_model(2, 501 + 2 * seed, false).with_name("b")};
  const Index on_a = 10 + static_cast<Index>(rng.next_uniform() * 20);
  const Index on_b = on_a + 30 + static_cast<Index>(rng.next_uniform() * 20);
  sc.inputs = {pulse_input(on_a, on_b + 40, 1.0 + rng.next_uniform()), PiecewiseInput({{on_b, 0.5 + rng.next_uniform()}})};
  return sc;
}

}  // namespace

TEST_CASE("detect_change") {
  const SignalSeries none_case({0.01, -0.02, 0.01});
  CHECK(detect_change(none_case, zeros(3), 2, 2, 0.1, kNoFloor).kind == ChangeKind::none);

  const SignalSeries rise({0.01, 0.5, 0.6});
  auto c = detect_change(rise, zeros(3), 2, 2, 0.1, kNoFloor);
  CHECK(c.kind == ChangeKind::increase);
  CHECK(c.k_star == 1);
  // One sample too early, the run is not yet long enough.
  CHECK(detect_change(rise, zeros(3), 1, 2, 0.1, kNoFloor).kind == ChangeKind::none);

  const SignalSeries drop({-0.5, -0.6});
  c = detect_change(drop, zeros(2), 1, 2, 0.1, kNoFloor);
  CHECK(c.kind == ChangeKind::decrease);
  CHECK(c.k_star == 0);

  const SignalSeries mixed({0.5, -0.6});
  CHECK(detect_change(mixed, zeros(2), 1, 2, 0.1, kNoFloor).kind == ChangeKind::none);

  // A run starting before the floor is ignored.
  CHECK(detect_change(rise, zeros(3), 2, 2, 0.1, 2).kind == ChangeKind::none);
  CHECK(detect_change(rise, zeros(3), 2, 1, 0.1, 2).kind == ChangeKind::increase);

  // The residual is measured against y_hat, not zero.
  CHECK(detect_change(rise, SignalSeries({0.0, 0.5, 0.6}), 2, 2, 0.1, kNoFloor).kind == ChangeKind::none);

  EngineParams p;
  p.deviation_threshold = 0.1;
  CHECK(detect_change(rise, zeros(3), 2, p).kind == ChangeKind::increase);
}

TEST_CASE("fit_on_event closed form") {
  const auto m = first_order("m");
  const SignalSeries e({0.0, 1.0, 1.5, 1.75});
  auto fit = fit_on_event(e, m, 0);
  REQUIRE(fit);
  CHECK(fit->level == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(fit->sse == doctest::Approx(0.0).epsilon(1e-14));

  Eigen::MatrixXd a(1, 1);
  a << 0.0;
  Eigen::VectorXd b(1), c(1);
  b << 1.0;
  c << 1.0;
  const DeviceModel delay("delay", a, b, c);
  fit = fit_on_event(e, delay, 0);
  REQUIRE(fit);
  CHECK(fit->level == doctest::Approx(4.25 / 3.0).epsilon(1e-14));
  CHECK(fit->sse == doctest::Approx(7.0 / 24.0).epsilon(1e-14));

  fit = fit_on_event(zeros(4), m, 0);
  REQUIRE(fit);
  CHECK(fit->level == 0.0);
  CHECK(fit->sse == 0.0);

  // G is zero on a single-sample window of a strictly proper model.
  const std::vector<double> g0{0.0, 0.0};
  const std::vector<double> e2{1.0, 2.0};
  CHECK_FALSE(fit_on_event(e2, g0).has_value());
  CHECK_FALSE(fit_on_event(e, m, 3).has_value());
  CHECK_THROWS_AS(fit_on_event(e2, std::vector<double>{1.0}), ValidationError);

  // The window starts at k'.
  const SignalSeries shifted({9.0, 0.0, 1.0, 1.5, 1.75});
  fit = fit_on_event(shifted, m, 1);
  REQUIRE(fit);
  CHECK(fit->level == doctest::Approx(2.0));
}

TEST_CASE("fit_on_event beats a dense level grid") {
  for (std::uint64_t t = 0; t < 200; ++t) {
    CounterRng rng(t, 5);
    const auto m = random_stable_model(1 + t % 4, 900 + t);
    const auto n = 3 + static_cast<std::size_t>(rng.next_uniform() * 20);
    std::vector<double> e(n);
    for (auto& v : e) v = rng.next_normal() + 1.0;
    const auto g = simulate_zero_state(m, std::vector<double>(n, 1.0));
    const auto fit = fit_on_event(e, g);
    REQUIRE(fit);
    auto sse = [&](double level) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::pow(e[i] - level * g[i], 2);
      return s;
    };
    const double top = 2.0 * std::max(1.0, std::abs(fit->level));
    for (int i = 0; i <= 2000; ++i) {
      const double level = -top + 2.0 * top * i / 2000.0;
      CHECK(fit->sse <= sse(level) + 1e-12 * (1.0 + sse(level)));
    }
  }
}

TEST_CASE("attribute_off_event") {
  const std::vector<std::pair<std::size_t, double>> two{{2, 2.0}, {1, 1.2}};
  CHECK(attribute_off_event(two, 1.25) == std::optional<std::size_t>(1));
  CHECK(attribute_off_event(two, -1.9) == std::optional<std::size_t>(2));

  const std::vector<std::pair<std::size_t, double>> one{{4, 0.3}};
  CHECK(attribute_off_event(one, 100.0) == std::optional<std::size_t>(4));

  const std::vector<std::pair<std::size_t, double>> tied{{1, 1.0}, {0, 1.0}};
  CHECK(attribute_off_event(tied, 1.0) == std::optional<std::size_t>(0));

  CHECK_FALSE(attribute_off_event(std::vector<std::pair<std::size_t, double>>{}, 1.0).has_value());

  // Profile form: the shape of the drop decides, not only its size.
  const std::vector<OffContribution> profiles{{0, {1.0, 1.0, 1.0}}, {1, {0.2, 0.6, 1.0}}};
  const std::vector<double> drop{0.25, 0.55, 1.05};
  CHECK(attribute_off_event(profiles, drop) == std::optional<std::size_t>(1));
}

TEST_CASE("select_on_candidate") {
  const auto m = random_stable_model(3, 11);
  Scenario sc;
  sc.horizon = 80;
  sc.models = {m.with_name("only")};
  sc.inputs = {PiecewiseInput({{20, 1.7}})};
  const auto y = render(sc).aggregate;

  EngineParams p;
  const Engine engine(y, sc.models, p);
  const auto config = engine.initial();
  ChangeDetection change;
  for (Index j = engine.start(); j < engine.end() && change.kind == ChangeKind::none; ++j) change = engine.detect(config, j);
  REQUIRE(change.kind == ChangeKind::increase);
  const auto pick = select_on_candidate(engine, config, change.k_star);
  REQUIRE(pick);
  CHECK(pick->device == 0);
  CHECK(pick->k == 20);
  CHECK(pick->level == doctest::Approx(1.7).epsilon(1e-9));

  // Identical models: the lower index wins.
  const Engine twins(y, {m.with_name("x"), m.with_name("y")}, p);
  const auto twin_pick = select_on_candidate(twins, twins.initial(), change.k_star);
  REQUIRE(twin_pick);
  CHECK(twin_pick->device == 0);

  // Under a cap below the true level, whatever survives respects the cap.
  const Engine capped(y, {m.with_bounds(1.0, std::nullopt)}, p);
  const auto capped_pick = select_on_candidate(capped, capped.initial(), change.k_star);
  if (capped_pick) CHECK(capped_pick->level <= 1.0);
  const Engine tight(y, {m.with_bounds(1e-3, std::nullopt)}, p);
  CHECK_FALSE(select_on_candidate(tight, tight.initial(), change.k_star).has_value());
  EngineParams high_min = p;
  high_min.min_level = 2.0;
  const Engine floor_engine(y, sc.models, high_min);
  CHECK_FALSE(select_on_candidate(floor_engine, floor_engine.initial(), change.k_star).has_value());
}

TEST_CASE("disaggregate: silent input") {
  const std::vector<DeviceModel> lib{random_stable_model(2, 1).with_name("a"), random_stable_model(3, 2).with_name("b")};
  const auto r = disaggregate(zeros(100), lib);
  CHECK(r.events.empty());
  CHECK(r.unexplained.empty());
  for (std::size_t k = 0; k < 100; ++k) CHECK(r.total[k] == 0.0);
  CHECK(r.residual_rms == 0.0);
}

TEST_CASE("disaggregate: noiseless single device") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (bool instant : {false, true}) {
      const auto m = random_stable_model(3, 40 + seed, instant).with_name("dev");
      Scenario sc;
      sc.horizon = 200;
      sc.models = {m};
      sc.inputs = {pulse_input(30, 119, 2.5)};
      const auto y = render(sc).aggregate;
      const auto r = disaggregate(y, sc.models);
      REQUIRE(r.events.size() == 2);
      CHECK(r.events[0] == SwitchEvent{30, 0, SwitchKind::on, r.events[0].level});
      CHECK(r.events[1] == SwitchEvent{120, 0, SwitchKind::off, 0.0});
      CHECK(std::abs(r.events[0].level - 2.5) <= 1e-6);
      CHECK(r.residual_rms <= 1e-9);
      check_result_invariants(r, sc.models, y);
    }
  }
}

TEST_CASE("disaggregate: invariants on noisy two-device inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sc = two_device_scenario(seed, 0.02);
    const auto y = render(sc).aggregate;
    for (int b : {1, 3}) {
      EngineParams p;
      p.beam_width = b;
      check_result_invariants(disaggregate_beam(y, sc.models, p), sc.models, y);
    }
  }
}

TEST_CASE("disaggregate: priors are respected") {
  const auto sc = two_device_scenario(3, 0.02);
  const auto y = render(sc).aggregate;
  auto lib = sc.models;
  lib[0] = lib[0].with_bounds(1.2, std::nullopt);
  lib[1] = lib[1].with_bounds(std::nullopt, 0.9);
  const auto r = disaggregate(y, lib);
  check_result_invariants(r, lib, y);
}

TEST_CASE("raising the threshold never adds events") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sc = two_device_scenario(seed, 0.05);
    const auto y = render(sc).aggregate;
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double thr : {0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 5.0, 100.0}) {
      EngineParams p;
      p.deviation_threshold = thr;
      const auto n = disaggregate(y, sc.models, p).events.size();
      CHECK(n <= previous);
      previous = n;
    }
    CHECK(previous == 0);
  }
}

TEST_CASE("noise estimate and default threshold") {
  Scenario sc;
  sc.horizon = 2000;
  sc.noise_std = 0.05;
  sc.seed = 3;
  sc.models = {random_stable_model(3, 4, true)};
  sc.inputs = {pulse_input(300, 1200, 2.0)};
  const auto y = render(sc).aggregate;
  CHECK(estimate_noise_std(y.span()) == doctest::Approx(0.05).epsilon(0.1));
  EngineParams p;
  CHECK(resolve_threshold(y.span(), p) == doctest::Approx(5.0 * estimate_noise_std(y.span())));
  p.deviation_threshold = 0.7;
  CHECK(resolve_threshold(y.span(), p) == 0.7);
  const std::vector<double> flat(50, 3.0);
  EngineParams q;
  CHECK(resolve_threshold(flat, q) > 0.0);
}

TEST_CASE("parameter and input validation") {
  const std::vector<DeviceModel> lib{random_stable_model(2, 1)};
  auto bad = [&](auto mutate) {
    EngineParams p;
    mutate(p);
    CHECK_THROWS_AS(p.validate(), ValidationError);
    CHECK_THROWS_AS(disaggregate(zeros(100), lib, p), ValidationError);
  };
  bad([](EngineParams& p) { p.lookahead = 0; });
  bad([](EngineParams& p) { p.backtrack = -1; });
  bad([](EngineParams& p) { p.beam_width = 0; });
  bad([](EngineParams& p) { p.persistence = 0; });
  bad([](EngineParams& p) { p.deviation_threshold = -1.0; });

  EngineParams p;
  CHECK_THROWS_AS(disaggregate(zeros(static_cast<std::size_t>(p.lookahead + p.backtrack)), lib, p), ValidationError);
  CHECK_NOTHROW(disaggregate(zeros(static_cast<std::size_t>(p.lookahead + p.backtrack + 1)), lib, p));
  CHECK_THROWS_AS(disaggregate(zeros(100), {}, p), ValidationError);
  std::vector<double> with_nan(100, 0.0);
  with_nan[40] = std::nan("");
  CHECK_THROWS_AS(disaggregate(SignalSeries(with_nan), lib, p), ValidationError);
}

TEST_CASE("result JSON round trip") {
  const auto sc = two_device_scenario(5, 0.02);
  const auto y = render(sc).aggregate;
  const auto r = disaggregate(y, sc.models);
  const auto doc = result_to_json(r);
  CHECK(doc.at("params").at("lookahead") == 15);
  CHECK(doc.at("params").at("deviation_threshold").get<double>() == r.threshold);
  const auto back = result_summary_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.events == r.events);
  CHECK(back.unexplained == r.unexplained);
  CHECK(back.residual_rms == r.residual_rms);
  CHECK(back.device_names == std::vector<std::string>{"a", "b"});
  for (const auto& e : doc.at("events")) {
    const auto kind = e.at("kind").get<std::string>();
    CHECK((kind == "on" || kind == "off"));
  }
  CHECK_THROWS_AS(result_summary_from_json(nlohmann::json{{"events", 3}}), ValidationError);
}
