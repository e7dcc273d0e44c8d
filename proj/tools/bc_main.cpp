// bc: experiment driver.
//
//   bc run --config <file> --out <dir> [--seed N] [--threads N]
//   bc validate --config <file>
//
// Exit status: 0 all checks passed, 1 some check failed, 2 usage or config
// error (nothing written), 3 I/O error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bc/config.hpp"
#include "bc/errors.hpp"
#include "bc/experiment.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kIoError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflection coupling experiments on truncated abstract Wiener spaces"};
  app.footer(bc::results_columns_help() +
             "\nExit status: 0 pass, 1 checks failed, 2 usage error, 3 I/O error.\n"
             "BC_THREADS sets the worker count when --threads is absent.");
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a config and preview its expansion");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  bc::ExperimentConfig cfg;
  try {
    cfg = bc::load_config(config_path);
  } catch (const bc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const bc::IoError& e) {
    std::cerr << "cannot read config: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  }

  if (*validate) {
    try {
      std::cout << bc::validation_report(cfg);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kUsageError;
    }
    return 0;
  }

  if (*seed_opt) {
    cfg.seed = seed;
    cfg.overridden.emplace_back("seed");
  }
  if (threads == 0) threads = bc::default_thread_count();

  try {
    const int status = bc::run_to_directory(cfg, out_dir, threads);
    std::cout << (status == 0 ? "PASS" : "FAIL") << " " << out_dir << "/summary.json\n";
    return status;
  } catch (const bc::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const bc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  }
}
