#pragma once

#include "eitlab/conductivity.hpp"
#include "eitlab/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eitlab {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string experiment;
  int resolution = 8;
  std::uint64_t seed = 1;
  int samples = 50;
  /// Interface heights or expressions in x1, x2, bottom to top.
  nlohmann::json interfaces = nlohmann::json::array({0.5});
  AprioriData apriori;
  /// {"gamma": [...], "A": kind, "A_params": {...}}
  nlohmann::json conductivity = nlohmann::json::object();
  nlohmann::json tolerances = nlohmann::json::object();
  nlohmann::json params = nlohmann::json::object();
  std::filesystem::path out_dir = ".";

  /// Parses and validates; unknown experiments and malformed fields raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& experiment);
  static ExperimentConfig load(const std::filesystem::path& path, const std::string& experiment);

  std::vector<InterfaceGraph> interface_graphs() const;
  double tolerance(const std::string& key, double fallback) const;
  double param(const std::string& key, double fallback) const;
};

/// One CSV cell: number or bare string.
using Cell = nlohmann::json;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
  /// Column index; throws when absent.
  std::size_t col(const std::string& name) const;
  double num(std::size_t row, const std::string& name) const;
  std::string str(std::size_t row, const std::string& name) const;
};

void write_csv(std::ostream& os, const Table& t);
Table read_csv(std::istream& is);

struct ResultRecord {
  std::string name;
  Table rows;
  /// Statistics and checks, recomputable from the rows via summarize().
  nlohmann::json summary;
  /// Extra context that does not derive from the rows (inputs, mesh hashes).
  nlohmann::json meta = nlohmann::json::object();
  /// Extra files (name, content) written next to the rows and summary.
  std::vector<std::pair<std::string, std::string>> artifacts;
  bool pass = false;
};

/// Recomputes the summary of an experiment from its rows and tolerances.
nlohmann::json summarize(const std::string& experiment, const Table& rows,
                         const nlohmann::json& tolerances);

/// Round-trips the rows through CSV and compares the recomputed summary.
bool resummarize_matches(const ResultRecord& r, const nlohmann::json& tolerances);

ResultRecord run_asymptotics(const ExperimentConfig& cfg);
ResultRecord run_stability_sweep(const ExperimentConfig& cfg);
ResultRecord run_su_decay(const ExperimentConfig& cfg);
ResultRecord run_kernel_checks(const ExperimentConfig& cfg);
ResultRecord run_budget(const ExperimentConfig& cfg);
ResultRecord run_mesh_gen(const ExperimentConfig& cfg);

ResultRecord run_experiment(const ExperimentConfig& cfg);

/// Writes <name>.rows.csv and <name>.summary.json into cfg.out_dir.
void write_outputs(const ResultRecord& r, const ExperimentConfig& cfg);

/// Least-squares slope of log y against log x after dropping the first and last
/// points (all points when fewer than four are given).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace eitlab
