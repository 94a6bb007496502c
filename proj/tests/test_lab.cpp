#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/lab.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace eitlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eitlab_test_lab_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string csv_of(const Table& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + EITLAB_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  os << j.dump(2);
}

}  // namespace

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::object(), "no-such-experiment"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::array(), "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"resolution", 2}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"resolution", "eight"}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"experiment", "asymptotics"}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"interfaces", {true}}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"interfaces", {"0.5 + "}}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"apriori", {{"gamma_bar", 2.0}}}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"tolerances", {{"x", "big"}}}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"params", 3}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"conductivity", {{"A", "spline"}}}}, "budget"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json", "budget"), ConfigError);

  const auto c = ExperimentConfig::from_json(
      {{"resolution", 12}, {"seed", 5}, {"interfaces", {0.3, "0.7 + 0.01*x1"}}, {"tolerances", {{"a", 0.5}}},
       {"params", {{"K", 3}, {"name", "x"}}}},
      "budget");
  CHECK(c.resolution == 12);
  CHECK(c.seed == 5);
  CHECK(c.apriori.N == 3);
  const auto g = c.interface_graphs();
  REQUIRE(g.size() == 2);
  CHECK(g[1](Vec2(1.0, 0.0)) == doctest::Approx(0.71));
  CHECK(c.tolerance("a", 1.0) == 0.5);
  CHECK(c.tolerance("b", 1.0) == 1.0);
  CHECK(c.param("K", 2) == 3);
  CHECK_THROWS_AS(c.param("name", 0), ConfigError);
  CHECK(experiment_names().size() == 6);
}

TEST_CASE("CSV tables round trip numbers exactly") {
  Table t;
  t.columns = {"kind", "i", "x"};
  t.add({"a", 3, 0.1});
  t.add({"b", -7, 1.0 / 3.0});
  t.add({"c", 0, 6.02214076e23});
  std::istringstream is(csv_of(t));
  const auto r = read_csv(is);
  CHECK(r.columns == t.columns);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.str(0, "kind") == "a");
  CHECK(r.num(1, "i") == -7);
  CHECK(r.num(1, "x") == 1.0 / 3.0);
  CHECK(r.num(2, "x") == 6.02214076e23);
  CHECK(csv_of(r) == csv_of(t));
  CHECK_THROWS_AS(t.col("missing"), std::out_of_range);
  CHECK_THROWS_AS(t.num(0, "kind"), std::out_of_range);
  CHECK_THROWS_AS(t.add({"short"}), std::logic_error);
}

TEST_CASE("log-log slope drops the end points") {
  std::vector<double> x, y;
  for (int i = 0; i < 6; ++i) {
    x.push_back(std::pow(0.5, i));
    y.push_back(3.0 / x.back());
  }
  CHECK(loglog_slope(x, y) == doctest::Approx(-1.0).epsilon(1e-14));
  y.front() = 1e6;
  y.back() = 1e-6;
  CHECK(loglog_slope(x, y) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(loglog_slope({1.0, 2.0, 4.0}, {1.0, 4.0, 16.0}) == doctest::Approx(2.0));
  CHECK(std::isnan(loglog_slope({1.0}, {1.0})));
}

TEST_CASE("budget experiment summary is recomputable from its rows") {
  const auto cfg = ExperimentConfig::load(fs::path(EITLAB_SOURCE_DIR) / "configs" / "budget.json", "budget");
  const auto r = run_experiment(cfg);
  CHECK(r.pass);
  CHECK(resummarize_matches(r, cfg.tolerances));
  CHECK(summarize("budget", r.rows, cfg.tolerances).dump() == r.summary.dump());
  const auto again = run_experiment(cfg);
  CHECK(csv_of(again.rows) == csv_of(r.rows));
}

TEST_CASE("mesh generation experiment writes its outputs") {
  auto cfg = ExperimentConfig::load(fs::path(EITLAB_SOURCE_DIR) / "configs" / "mesh-gen.json", "mesh-gen");
  cfg.resolution = 4;
  cfg.out_dir = scratch("mesh");
  const auto r = run_experiment(cfg);
  CHECK(r.pass);
  CHECK(resummarize_matches(r, cfg.tolerances));
  write_outputs(r, cfg);
  CHECK(fs::exists(cfg.out_dir / "mesh-gen.rows.csv"));
  CHECK(fs::exists(cfg.out_dir / "mesh-gen.mesh"));
  std::ifstream is(cfg.out_dir / "mesh-gen.summary.json");
  const json s = json::parse(is);
  CHECK(s["experiment"] == "mesh-gen");
  CHECK(s["resolution"] == 4);
  CHECK(s["pass"] == true);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  const fs::path configs = fs::path(EITLAB_SOURCE_DIR) / "configs";
  SUBCASE("success") {
    CHECK(run_cli("budget --config " + (configs / "budget.json").string() + " --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "budget.rows.csv"));
    CHECK(fs::exists(dir / "budget.summary.json"));
  }
  SUBCASE("tolerance failure") {
    const auto cfg_path = dir / "tight.json";
    write_json(cfg_path, {{"experiment", "kernel-checks"},
                          {"params", {{"points", 10}}},
                          {"tolerances", {{"weak_delta_isotropic", 1e-30}}}});
    CHECK(run_cli("kernel-checks --config " + cfg_path.string() + " --out " + dir.string()) == 1);
  }
  SUBCASE("configuration errors") {
    CHECK(run_cli("budget --config " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("no-such-experiment --config " + (configs / "budget.json").string()) == 2);
    CHECK(run_cli("budget") == 2);
    CHECK(run_cli("budget --config " + (configs / "budget.json").string() + " --resolution 2") == 2);
    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK(run_cli("budget --config " + bad.string()) == 2);
  }
}
