#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dynilm/cli.hpp"
#include "dynilm/library_io.hpp"
#include "dynilm/scenario.hpp"
#include "dynilm/signal.hpp"

using namespace dynilm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dynilm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("simulate, disaggregate, evaluate, plot-data") {
  const auto dir = fresh_dir("pipeline");
  const auto sim = (dir / "sim").string();
  const auto res = (dir / "res").string();

  auto r = run({"simulate", "--paper", "--seed", "7", "--out", sim});
  REQUIRE(r.code == 0);
  for (const char* f : {"scenario.json", "library.json", "aggregate.csv", "truth_1.csv", "truth_5.csv"}) {
    CHECK(fs::exists(fs::path(sim) / f));
  }

  r = run({"disaggregate", "--library", sim + "/library.json", "--input", sim + "/aggregate.csv", "--out", res});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(fs::path(res) / "result.json"));
  CHECK(fs::exists(fs::path(res) / "estimate_5.csv"));

  const auto metrics = (dir / "metrics.json").string();
  r = run({"evaluate", "--result", res + "/result.json", "--scenario", sim + "/scenario.json", "--out", metrics});
  REQUIRE(r.code == 0);
  const auto m = nlohmann::json::parse(slurp(metrics));
  CHECK(m.at("precision") == 1.0);
  CHECK(m.at("recall") == 1.0);
  CHECK(m.at("switch_time_mae") == 0.0);
  CHECK(m.at("level_errors").size() == 4);

  // Printed when --out is omitted.
  r = run({"evaluate", "--result", res + "/result.json", "--scenario", sim + "/scenario.json"});
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out) == m);

  const auto plot = (dir / "plot.csv").string();
  r = run({"plot-data", "--result", res + "/result.json", "--library", sim + "/library.json", "--input",
           sim + "/aggregate.csv", "--out", plot});
  REQUIRE(r.code == 0);
  std::ifstream in(plot);
  std::string line;
  std::getline(in, line);
  CHECK(line == "series,k,value");
  std::map<std::string, std::size_t> counts;
  while (std::getline(in, line)) counts[line.substr(0, line.find(','))]++;
  const std::vector<std::string> expected{"y_hat",         "y_hat_device1", "y_hat_device2", "y_hat_device3",
                                          "y_hat_device4", "y_hat_device5", "y_m"};
  std::vector<std::string> names;
  for (const auto& [name, n] : counts) {
    names.push_back(name);
    CHECK(n == 450);
  }
  CHECK(names == expected);
}

TEST_CASE("reruns are byte identical") {
  const auto dir = fresh_dir("rerun");
  for (const char* tag : {"a", "b"}) {
    const auto base = (dir / tag).string();
    REQUIRE(run({"simulate", "--paper", "--seed", "3", "--out", base + "/sim"}).code == 0);
    REQUIRE(run({"disaggregate", "--library", base + "/sim/library.json", "--input", base + "/sim/aggregate.csv",
                 "--out", base + "/res", "--beam", "3"})
                .code == 0);
    REQUIRE(run({"evaluate", "--result", base + "/res/result.json", "--scenario", base + "/sim/scenario.json",
                 "--out", base + "/metrics.json"})
                .code == 0);
  }
  for (const char* f : {"sim/scenario.json", "sim/aggregate.csv", "sim/truth_2.csv", "res/result.json",
                        "res/estimate_3.csv", "metrics.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK_FALSE(slurp(dir / "a" / f).empty());
  }
}

TEST_CASE("simulate from a scenario file") {
  const auto dir = fresh_dir("scenario");
  Scenario sc;
  sc.horizon = 120;
  sc.seed = 4;
  sc.noise_std = 0.01;
  sc.models = {random_stable_model(2, 8, true).with_name("fan")};
  sc.inputs = {pulse_input(10, 59, 1.5)};
  {
    std::ofstream f(dir / "scenario.json");
    f << scenario_to_json(sc).dump(2);
  }
  const auto r = run({"simulate", "--scenario", (dir / "scenario.json").string(), "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const auto agg = read_signal_csv(dir / "out" / "aggregate.csv");
  CHECK(agg.size() == 120);
  CHECK(agg == render(sc).aggregate);

  CHECK(run({"simulate", "--scenario", (dir / "scenario.json").string(), "--paper", "--out", (dir / "x").string()})
            .code == 1);
  CHECK(run({"simulate", "--out", (dir / "y").string()}).code == 1);
}

TEST_CASE("identify appends to a library") {
  const auto dir = fresh_dir("identify");
  Scenario sc;
  sc.horizon = 400;
  sc.models = {random_stable_model(3, 21, false).with_name("toaster")};
  sc.inputs = {pulse_input(20, 199, 3.0)};
  write_signal_csv(dir / "toaster.csv", render(sc).aggregate);
  const auto lib = (dir / "lib.json").string();

  auto r = run({"identify", "--input", (dir / "toaster.csv").string(), "--name", "toaster", "--threshold", "0.5",
                "--na", "3", "--nb", "3", "--library", lib});
  REQUIRE(r.code == 0);
  auto models = read_library(lib);
  REQUIRE(models.size() == 1);
  CHECK(models[0].name() == "toaster");
  CHECK(dc_gain(models[0]) == doctest::Approx(1.0).epsilon(0.02));

  r = run({"identify", "--input", (dir / "toaster.csv").string(), "--name", "toaster2", "--threshold", "0.5",
           "--max-output", "10", "--library", lib});
  REQUIRE(r.code == 0);
  models = read_library(lib);
  REQUIRE(models.size() == 2);
  CHECK(models[1].max_output() == std::optional<double>(10.0));

  // Same name again is rejected and the library is left alone.
  r = run({"identify", "--input", (dir / "toaster.csv").string(), "--name", "toaster", "--threshold", "0.5",
           "--library", lib});
  CHECK(r.code == 1);
  CHECK(read_library(lib).size() == 2);

  // Without --library the model JSON is printed.
  r = run({"identify", "--input", (dir / "toaster.csv").string(), "--threshold", "0.5"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out).at("name") == "device");
}

TEST_CASE("exit codes") {
  const auto dir = fresh_dir("codes");
  CHECK(run({}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"frobnicate"}).code == 1);
  auto r = run({"simulate", "--paper", "--bogus", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  CHECK(run({"simulate", "--paper", "--seed", "notanumber", "--out", dir.string()}).code == 1);

  // Missing files are I/O errors.
  CHECK(run({"disaggregate", "--library", (dir / "none.json").string(), "--input", (dir / "none.csv").string(),
             "--out", (dir / "res").string()})
            .code == 2);

  // Malformed input is a validation error.
  {
    std::ofstream f(dir / "bad.csv");
    f << "k,value\n0,1.0\n1,oops\n";
  }
  REQUIRE(run({"simulate", "--paper", "--out", (dir / "sim").string()}).code == 0);
  CHECK(run({"disaggregate", "--library", (dir / "sim/library.json").string(), "--input", (dir / "bad.csv").string(),
             "--out", (dir / "res").string()})
            .code == 1);
  CHECK(run({"disaggregate", "--library", (dir / "sim/library.json").string(), "--input",
             (dir / "sim/aggregate.csv").string(), "--out", (dir / "res").string(), "--beam", "0"})
            .code == 1);
}
