#pragma once

// Seeded experiment suites over the coupling and analysis modules.
//
// Every experiment writes three files into the output directory:
//   results.csv   per-replicate rows (columns depend on the kind, see --help)
//   summary.json  aggregates and pass/fail per check
//   law.csv       the analytic curve the experiment is compared against
// The infinity experiment also writes coupling_times.json with the block
// coupling times of every replicate.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bc/config.hpp"
#include "bc/simulation.hpp"

namespace bc {

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string to_csv() const;
  static ResultTable from_csv(const std::string& text);
  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

struct ExperimentOutput {
  ResultTable results;
  ResultTable law;
  nlohmann::json summary;
  std::optional<nlohmann::json> coupling_times;

  bool pass() const { return summary.at("pass").get<bool>(); }
};

// BC_THREADS when set to a positive integer, otherwise 1.
std::size_t default_thread_count();

// Runs fn(i) for i in [0, n) on `threads` workers. Rethrows the first error.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

// Horizon after resolving "auto" (smallest grid multiple whose analytic
// censoring probability is within the configured bound).
double resolve_horizon(const ExperimentConfig& cfg);
TimeGrid build_grid(const ExperimentConfig& cfg);

ExperimentOutput run_experiment(const ExperimentConfig& cfg, std::size_t threads);

// Pure function of the per-replicate table and the configuration.
nlohmann::json summarize(const ExperimentConfig& cfg, const ResultTable& results);

// Column layout of results.csv for each kind, for --help.
std::string results_columns_help();

// Runs and writes the artifacts atomically. Returns 0 iff every check passed.
int run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                     std::size_t threads);

// Human-readable preview used by `bc validate`.
std::string validation_report(const ExperimentConfig& cfg);

}  // namespace bc
