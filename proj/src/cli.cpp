#include "dynilm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "dynilm/engine.hpp"
#include "dynilm/error.hpp"
#include "dynilm/ingest.hpp"
#include "dynilm/library_io.hpp"
#include "dynilm/metrics.hpp"
#include "dynilm/scenario.hpp"
#include "dynilm/signal.hpp"
#include "dynilm/sysid.hpp"

namespace dynilm {

namespace fs = std::filesystem;

namespace {

struct InputOptions {
  std::string path;
  std::string channel = "irms";
  double rate = kEmonRateHz;
};

void add_input_options(CLI::App& cmd, InputOptions& in, const std::string& what) {
  cmd.add_option("--input", in.path, what + " (k,value signal CSV or emonTx CSV)")->required();
  cmd.add_option("--channel", in.channel, "emonTx channel: irms, pw or pva")->capture_default_str();
  cmd.add_option("--rate", in.rate, "emonTx resampling rate in Hz")->capture_default_str();
}

/// Signal CSVs and emonTx exports are told apart by their header line.
SignalSeries load_signal(const InputOptions& in, std::ostream& err) {
  std::ifstream probe(in.path);
  if (!probe) throw IoError("cannot open " + in.path);
  std::string header;
  std::getline(probe, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  probe.close();
  if (header != kEmonHeader) return read_signal_csv(fs::path(in.path));

  const auto records = parse_emontx_csv(fs::path(in.path));
  auto resampled = to_signal(records, parse_channel(in.channel), in.rate);
  for (const auto& gap : resampled.gaps) {
    err << "warning: " << (gap.long_gap ? "long gap" : "gap") << " at k=" << gap.start_index << ", held "
        << gap.held_samples << " samples\n";
  }
  return std::move(resampled.series);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string indexed(const std::string& stem, std::size_t i) { return stem + "_" + std::to_string(i + 1) + ".csv"; }

struct SimulateArgs {
  std::string scenario;
  std::string library;
  bool paper = false;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  Scenario sc;
  if (a.paper) {
    sc = paper_simulation(a.seed.value_or(0));
  } else {
    const auto library = a.library.empty() ? std::vector<DeviceModel>{} : read_library(a.library);
    sc = scenario_from_json(read_json_file(a.scenario), library);
    if (a.seed) sc.seed = *a.seed;
  }
  const auto rendered = render(sc);
  ensure_dir(a.out);
  const fs::path dir(a.out);
  write_json_file(dir / "scenario.json", scenario_to_json(sc));
  write_library(dir / "library.json", sc.models);
  write_signal_csv(dir / "aggregate.csv", rendered.aggregate);
  for (std::size_t i = 0; i < rendered.truth_outputs.size(); ++i) {
    write_signal_csv(dir / indexed("truth", i), rendered.truth_outputs[i]);
  }
  out << "wrote " << sc.models.size() << " devices, " << rendered.aggregate.size() << " samples to " << a.out << "\n";
  return 0;
}

struct IdentifyArgs {
  InputOptions input;
  std::string name = "device";
  double threshold = 1.0;
  Index settle_skip = 0;
  ArxOrders orders;
  std::optional<double> max_output;
  std::string library;
};

int cmd_identify(const IdentifyArgs& a, std::ostream& out, std::ostream& err) {
  const auto y = load_signal(a.input, err);
  auto model = identify_device(y, {a.name, a.threshold, a.settle_skip}, a.orders);
  if (a.max_output) model = model.with_bounds(model.max_input(), a.max_output);

  std::vector<DeviceModel> library;
  if (!a.library.empty() && fs::exists(a.library)) library = read_library(a.library);
  const bool taken = std::any_of(library.begin(), library.end(),
                                 [&](const DeviceModel& m) { return m.name() == model.name(); });
  if (taken) throw ValidationError("library already has a device named '" + model.name() + "'");
  library.push_back(model);

  if (a.library.empty()) {
    out << model_to_json(model).dump(2) << "\n";
  } else {
    write_library(a.library, library);
    out << "appended '" << model.name() << "' (order " << model.order() << ", dc gain "
        << format_double(dc_gain(model)) << ") to " << a.library << "\n";
  }
  return 0;
}

struct DisaggregateArgs {
  std::string library;
  InputOptions input;
  std::string out;
  std::optional<double> threshold;
  EngineParams params;
  bool no_refit = false;
};

int cmd_disaggregate(DisaggregateArgs a, std::ostream& out, std::ostream& err) {
  const auto library = read_library(a.library);
  const auto y = load_signal(a.input, err);
  a.params.deviation_threshold = a.threshold;
  a.params.refit_levels = !a.no_refit;
  const auto result = a.params.beam_width > 1 ? disaggregate_beam(y, library, a.params)
                                              : disaggregate(y, library, a.params);
  ensure_dir(a.out);
  const fs::path dir(a.out);
  write_json_file(dir / "result.json", result_to_json(result));
  for (std::size_t i = 0; i < result.outputs.size(); ++i) {
    write_signal_csv(dir / indexed("estimate", i), result.outputs[i]);
  }
  out << result.events.size() << " events, " << result.unexplained.size() << " unexplained, residual rms "
      << format_double(result.residual_rms) << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string result;
  std::string scenario;
  std::string library;
  std::string out;
  Index window = 10;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto library = a.library.empty() ? std::vector<DeviceModel>{} : read_library(a.library);
  const auto sc = scenario_from_json(read_json_file(a.scenario), library);
  const auto truth = truth_from_scenario(sc);
  const auto summary = result_summary_from_json(read_json_file(a.result));
  const auto estimate = result_from_summary(summary, library.empty() ? sc.models : library, truth.aggregate);
  const auto metrics = metrics_to_json(score(estimate, truth, a.window));
  if (a.out.empty()) {
    out << metrics.dump(2) << "\n";
  } else {
    if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
    write_json_file(a.out, metrics);
    out << "wrote " << a.out << "\n";
  }
  return 0;
}

struct PlotArgs {
  std::string result;
  std::string library;
  InputOptions input;
  std::string out;
};

int cmd_plot_data(const PlotArgs& a, std::ostream& out, std::ostream& err) {
  const auto library = read_library(a.library);
  const auto y = load_signal(a.input, err);
  const auto summary = result_summary_from_json(read_json_file(a.result));
  const auto estimate = result_from_summary(summary, library, y);

  std::string text = "series,k,value\n";
  const auto emit = [&](const std::string& name, const SignalSeries& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      text += name + "," + std::to_string(s.start_index() + static_cast<Index>(i)) + "," + format_double(s[i]) + "\n";
    }
  };
  emit("y_m", y);
  emit("y_hat", estimate.total);
  for (std::size_t i = 0; i < estimate.outputs.size(); ++i) emit("y_hat_" + estimate.device_names[i], estimate.outputs[i]);
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  write_text(a.out, text);
  out << "wrote " << 2 + estimate.outputs.size() << " series to " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Load disaggregation with linear dynamical device models", "dynilm"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Render a scenario to aggregate and per-device truth CSVs");
  auto* scenario_opt = simulate->add_option("--scenario", sim.scenario, "scenario JSON");
  simulate->add_option("--library", sim.library, "library resolving model_ref entries");
  auto* paper_opt = simulate->add_flag("--paper", sim.paper, "five-device reference simulation");
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--out", sim.out, "output directory")->required();
  scenario_opt->excludes(paper_opt);

  IdentifyArgs id;
  auto* identify = app.add_subcommand("identify", "Fit a device model from a single plug recording");
  add_input_options(*identify, id.input, "plug recording");
  identify->add_option("--name", id.name, "device name")->capture_default_str();
  identify->add_option("--threshold", id.threshold, "on/off threshold in signal units")->capture_default_str();
  identify->add_option("--settle-skip", id.settle_skip, "samples skipped before measuring the on level");
  identify->add_option("--na", id.orders.na, "autoregressive order")->capture_default_str();
  identify->add_option("--nb", id.orders.nb, "input order")->capture_default_str();
  identify->add_option("--delay", id.orders.delay, "input delay in samples")->capture_default_str();
  identify->add_option("--max-output", id.max_output, "output cap stored with the model");
  identify->add_option("--library", id.library, "library JSON to append to (printed when omitted)");

  DisaggregateArgs dis;
  auto* disagg = app.add_subcommand("disaggregate", "Estimate device inputs from an aggregate signal");
  dis.params = EngineParams{};
  disagg->add_option("--library", dis.library, "device library JSON")->required();
  add_input_options(*disagg, dis.input, "aggregate signal");
  disagg->add_option("--out", dis.out, "output directory")->required();
  disagg->add_option("--threshold", dis.threshold, "deviation threshold (default: 5 x noise estimate)");
  disagg->add_option("--persistence", dis.params.persistence, "violating samples before a change")->capture_default_str();
  disagg->add_option("--lookahead", dis.params.lookahead, "N, samples used to fit an on switch")->capture_default_str();
  disagg->add_option("--window", dis.params.backtrack, "W, candidate switch times before k*")->capture_default_str();
  disagg->add_option("--min-on", dis.params.min_on_duration, "minimum on duration in samples")->capture_default_str();
  disagg->add_option("--min-level", dis.params.min_level, "minimum on level")->capture_default_str();
  disagg->add_option("--beam", dis.params.beam_width, "number of hypotheses kept")->capture_default_str();
  disagg->add_flag("--no-refit", dis.no_refit, "keep per-event levels instead of the final joint refit");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a result against a scenario's ground truth");
  evaluate->add_option("--result", ev.result, "result.json from disaggregate")->required();
  evaluate->add_option("--scenario", ev.scenario, "scenario.json from simulate")->required();
  evaluate->add_option("--library", ev.library, "library used for disaggregation (default: scenario models)");
  evaluate->add_option("--out", ev.out, "metrics JSON path (printed when omitted)");
  evaluate->add_option("--window", ev.window, "event matching window in samples")->capture_default_str();

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot-data", "Long-format CSV of measured, estimated and per-device series");
  plot->add_option("--result", pl.result, "result.json from disaggregate")->required();
  plot->add_option("--library", pl.library, "device library JSON")->required();
  add_input_options(*plot, pl.input, "aggregate signal");
  plot->add_option("--out", pl.out, "output CSV path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) {
      if (!sim.paper && sim.scenario.empty()) throw ValidationError("simulate needs --scenario or --paper");
      return cmd_simulate(sim, out);
    }
    if (identify->parsed()) return cmd_identify(id, out, err);
    if (disagg->parsed()) return cmd_disaggregate(dis, out, err);
    if (evaluate->parsed()) return cmd_evaluate(ev, out);
    if (plot->parsed()) return cmd_plot_data(pl, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dynilm
