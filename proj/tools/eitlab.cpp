#include "eitlab/lab.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-stability lab for the inverse conductivity problem"};
  std::string experiment;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int resolution = 0;
  app.add_option("experiment", experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember(eitlab::experiment_names()));
  app.add_option("--config", config, "JSON configuration file")->required();
  auto* out_opt = app.add_option("--out", out, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Sampling seed");
  auto* res_opt = app.add_option("--resolution", resolution, "Mesh resolution (cells per unit)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  eitlab::ExperimentConfig cfg;
  try {
    cfg = eitlab::ExperimentConfig::load(config, experiment);
    if (*out_opt) cfg.out_dir = out;
    if (*seed_opt) cfg.seed = seed;
    if (*res_opt) {
      if (resolution < 4) throw eitlab::ConfigError("resolution must be >= 4");
      cfg.resolution = resolution;
    }
  } catch (const eitlab::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  eitlab::ResultRecord rec;
  try {
    rec = eitlab::run_experiment(cfg);
    eitlab::write_outputs(rec, cfg);
  } catch (const eitlab::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << experiment << " failed: " << e.what() << '\n';
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& c : rec.summary["checks"]) {
    std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["check"].get<std::string>()
              << " value=" << c["value"].dump() << '\n';
  }
  std::cout << experiment << ": " << (rec.pass ? "all tolerances met" : "tolerance failure")
            << " (" << secs << " s), outputs in " << cfg.out_dir.string() << '\n';
  return rec.pass ? 0 : 1;
}
