#pragma once

// Experiment configuration (JSON, "schema": 1).
//
// Unknown fields are rejected. Errors are reported as ConfigError whose
// field() is a dotted path such as "model.sigmas[1]".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bc/wiener_space.hpp"

namespace bc {

enum class ExperimentKind { CouplingTime, Maximality, Infinity, Ruin, Density, Isometry };

std::string to_string(ExperimentKind kind);

// Named displacement family "h-divergent-geometric(rho)": a_k = 1 and
// sigma_k = rho^k, k = 1..K. Its H-norm sqrt(K) diverges as K grows while
// the W-norm stays bounded for rho < 1.
struct GeometricFamily {
  std::string name;
  double rho = 0.5;
  std::size_t count = 0;
  AmbientNorm ambient = AmbientNorm::L2;
};

struct GridSpec {
  double horizon = 0.0;  // 0 with horizon_auto set
  bool horizon_auto = false;
  double step = 0.0;
  std::vector<double> checkpoints;
};

struct Tolerances {
  double ks_exact = 0.02;
  double ks_grid = 0.03;
  double censored_fraction = 0.01;
  double sigma_width = 3.0;
  double final_median_fraction = 0.10;
  double divergence_threshold = 4.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::CouplingTime;
  ModelSpec model = ModelSpec::diagonal({1.0}, AmbientNorm::L2);
  std::optional<HVector> displacement;
  std::optional<GeometricFamily> family;
  std::optional<GridSpec> grid;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  bool bridge = true;
  // coupling-time: "exact", "grid" or "both".
  std::string method = "both";
  std::vector<double> lambdas{2.0, 5.0, 10.0};
  std::vector<double> hnorms;
  std::size_t vectors = 3;
  Tolerances tolerances;
  std::vector<std::string> overridden;
};

nlohmann::json model_to_json(const ModelSpec& model);
ModelSpec model_from_json(const nlohmann::json& j, const std::string& path = "model");

GeometricFamily parse_family(const std::string& name, const std::string& path);
ModelSpec family_model(const GeometricFamily& family);
HVector family_vector(const GeometricFamily& family);

ExperimentConfig parse_config(const nlohmann::json& j);
// Reads and parses a file; JSON syntax errors carry line and column.
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json tolerances_to_json(const Tolerances& t);

}  // namespace bc
