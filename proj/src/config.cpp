#include "bc/config.hpp"

#include <cmath>
#include <regex>
#include <set>

#include "bc/errors.hpp"
#include "bc/io.hpp"

namespace bc {
namespace {

using nlohmann::json;

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(join_path(path, it.key()), "unknown field");
    }
  }
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(join_path(path, key), "required field missing");
  return obj.at(key);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

double get_positive(const json& j, const std::string& path) {
  const double v = get_number(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
  return v;
}

std::int64_t get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  if (j.is_number_unsigned()) {
    const auto u = j.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) throw ConfigError(path, "integer too large");
    return static_cast<std::int64_t>(u);
  }
  return j.get<std::int64_t>();
}

std::vector<double> get_number_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], index_path(path, i)));
  return out;
}

AmbientNorm parse_ambient(const json& j, const std::string& path) {
  if (j == "L2") return AmbientNorm::L2;
  if (j == "SUP") return AmbientNorm::Sup;
  throw ConfigError(path, "expected \"L2\" or \"SUP\"");
}

ExperimentKind parse_kind(const json& j, const std::string& path) {
  static const std::pair<const char*, ExperimentKind> kinds[] = {
      {"coupling-time", ExperimentKind::CouplingTime}, {"maximality", ExperimentKind::Maximality},
      {"infinity", ExperimentKind::Infinity},          {"ruin", ExperimentKind::Ruin},
      {"density", ExperimentKind::Density},            {"isometry", ExperimentKind::Isometry}};
  if (j.is_string()) {
    for (const auto& [name, kind] : kinds) {
      if (j == name) return kind;
    }
  }
  throw ConfigError(path, "expected one of coupling-time, maximality, infinity, ruin, density, isometry");
}

GridSpec parse_grid(const json& j, const std::string& path, bool allow_auto) {
  require_object(j, path);
  reject_unknown(j, path, {"horizon", "step", "checkpoints"});
  GridSpec g;
  const json& h = require(j, "horizon", path);
  if (allow_auto && h == "auto") {
    g.horizon_auto = true;
  } else {
    g.horizon = get_positive(h, join_path(path, "horizon"));
  }
  g.step = get_positive(require(j, "step", path), join_path(path, "step"));
  if (j.contains("checkpoints")) {
    g.checkpoints = get_number_list(j.at("checkpoints"), join_path(path, "checkpoints"));
    for (std::size_t i = 0; i < g.checkpoints.size(); ++i) {
      const std::string p = index_path(join_path(path, "checkpoints"), i);
      if (!(g.checkpoints[i] > 0.0)) throw ConfigError(p, "must be > 0");
      if (i > 0 && !(g.checkpoints[i] > g.checkpoints[i - 1])) {
        throw ConfigError(p, "checkpoints must be strictly increasing");
      }
      if (!g.horizon_auto && g.checkpoints[i] > g.horizon * (1 + 1e-12)) {
        throw ConfigError(p, "checkpoint beyond the horizon");
      }
    }
  }
  if (!g.horizon_auto) {
    const double cells = std::round(g.horizon / g.step);
    if (cells < 1.0 || std::abs(cells * g.step - g.horizon) > 1e-9 * g.horizon) {
      throw ConfigError(join_path(path, "step"), "horizon must be a whole multiple of step");
    }
    for (std::size_t i = 0; i < g.checkpoints.size(); ++i) {
      const double c = std::round(g.checkpoints[i] / g.step);
      if (std::abs(c * g.step - g.checkpoints[i]) > 1e-9 * std::max(1.0, g.checkpoints[i])) {
        throw ConfigError(index_path(join_path(path, "checkpoints"), i),
                          "checkpoint is not a grid point");
      }
    }
  }
  return g;
}

void parse_tolerances(const json& j, const std::string& path, ExperimentConfig& cfg) {
  require_object(j, path);
  const std::pair<const char*, double Tolerances::*> fields[] = {
      {"ks_exact", &Tolerances::ks_exact},
      {"ks_grid", &Tolerances::ks_grid},
      {"censored_fraction", &Tolerances::censored_fraction},
      {"sigma_width", &Tolerances::sigma_width},
      {"final_median_fraction", &Tolerances::final_median_fraction},
      {"divergence_threshold", &Tolerances::divergence_threshold}};
  std::set<std::string> allowed;
  for (const auto& [name, member] : fields) allowed.insert(name);
  reject_unknown(j, path, allowed);
  for (const auto& [name, member] : fields) {
    if (j.contains(name)) {
      cfg.tolerances.*member = get_positive(j.at(name), join_path(path, name));
      cfg.overridden.emplace_back(name);
    }
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::CouplingTime: return "coupling-time";
    case ExperimentKind::Maximality: return "maximality";
    case ExperimentKind::Infinity: return "infinity";
    case ExperimentKind::Ruin: return "ruin";
    case ExperimentKind::Density: return "density";
    case ExperimentKind::Isometry: return "isometry";
  }
  return "unknown";
}

json model_to_json(const ModelSpec& model) {
  if (model.kind() == ModelKind::ClassicalWiener) {
    return {{"kind", "ClassicalWiener"}, {"J", model.levels()}, {"m", model.resolution()}};
  }
  const auto s = model.sigmas();
  return {{"kind", "DiagonalSequence"},
          {"sigmas", std::vector<double>(s.begin(), s.end())},
          {"ambient", to_string(model.ambient())}};
}

ModelSpec model_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  const json& kind = require(j, "kind", path);
  if (kind == "ClassicalWiener") {
    reject_unknown(j, path, {"kind", "J", "m"});
    const auto levels = get_integer(require(j, "J", path), join_path(path, "J"));
    const auto resolution = get_integer(require(j, "m", path), join_path(path, "m"));
    if (levels < 0 || levels > 24) throw ConfigError(join_path(path, "J"), "must lie in [0, 24]");
    if (resolution < levels + 1 || resolution > 30) {
      throw ConfigError(join_path(path, "m"), "must satisfy J+1 <= m <= 30");
    }
    return ModelSpec::classical(static_cast<int>(levels), static_cast<int>(resolution));
  }
  if (kind == "DiagonalSequence") {
    reject_unknown(j, path, {"kind", "sigmas", "ambient"});
    const std::string spath = join_path(path, "sigmas");
    const auto sigmas = get_number_list(require(j, "sigmas", path), spath);
    if (sigmas.empty()) throw ConfigError(spath, "must not be empty");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      if (!(sigmas[i] > 0.0)) throw ConfigError(index_path(spath, i), "sigma must be > 0");
    }
    const AmbientNorm ambient =
        parse_ambient(require(j, "ambient", path), join_path(path, "ambient"));
    return ModelSpec::diagonal(sigmas, ambient);
  }
  throw ConfigError(join_path(path, "kind"), "expected \"ClassicalWiener\" or \"DiagonalSequence\"");
}

GeometricFamily parse_family(const std::string& name, const std::string& path) {
  static const std::regex pattern(R"(h-divergent-geometric\(\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\))");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) {
    throw ConfigError(path, "unknown family \"" + name + "\" (expected h-divergent-geometric(rho))");
  }
  GeometricFamily f;
  f.name = name;
  f.rho = std::stod(m[1].str());
  if (!(f.rho > 0.0)) throw ConfigError(path, "rho must be > 0");
  return f;
}

ModelSpec family_model(const GeometricFamily& family) {
  std::vector<double> sigmas(family.count);
  for (std::size_t k = 1; k <= family.count; ++k) {
    sigmas[k - 1] = std::pow(family.rho, static_cast<double>(k));
  }
  return ModelSpec::diagonal(std::move(sigmas), family.ambient);
}

HVector family_vector(const GeometricFamily& family) {
  return HVector(std::vector<double>(family.count, 1.0));
}

json tolerances_to_json(const Tolerances& t) {
  return {{"ks_exact", t.ks_exact},
          {"ks_grid", t.ks_grid},
          {"censored_fraction", t.censored_fraction},
          {"sigma_width", t.sigma_width},
          {"final_median_fraction", t.final_median_fraction},
          {"divergence_threshold", t.divergence_threshold}};
}

ExperimentConfig parse_config(const json& j) {
  require_object(j, "");
  reject_unknown(j, "", {"schema", "kind", "model", "displacement", "grid", "replicates", "seed",
                         "bridge", "method", "lambdas", "hnorms", "vectors", "tolerances"});
  if (get_integer(require(j, "schema", ""), "schema") != 1) {
    throw ConfigError("schema", "unsupported schema version (expected 1)");
  }
  ExperimentConfig cfg;
  cfg.kind = parse_kind(require(j, "kind", ""), "kind");
  const ExperimentKind kind = cfg.kind;

  const auto replicates = get_integer(require(j, "replicates", ""), "replicates");
  if (replicates < 1) throw ConfigError("replicates", "must be >= 1");
  if (replicates > 0xFFFFFFFFll) throw ConfigError("replicates", "must fit in 32 bits");
  cfg.replicates = static_cast<std::size_t>(replicates);
  const json& seed = require(j, "seed", "");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw ConfigError("seed", "expected a non-negative integer");
  }
  cfg.seed = seed.get<std::uint64_t>();

  // Displacement: explicit coefficients or a named family.
  const bool needs_displacement = kind != ExperimentKind::Isometry;
  if (j.contains("displacement")) {
    const json& d = j.at("displacement");
    require_object(d, "displacement");
    if (d.contains("family")) {
      reject_unknown(d, "displacement", {"family", "K", "ambient"});
      if (!d.at("family").is_string()) throw ConfigError("displacement.family", "expected a string");
      GeometricFamily f = parse_family(d.at("family").get<std::string>(), "displacement.family");
      const auto count = get_integer(require(d, "K", "displacement"), "displacement.K");
      if (count < 1) throw ConfigError("displacement.K", "must be >= 1");
      f.count = static_cast<std::size_t>(count);
      if (d.contains("ambient")) f.ambient = parse_ambient(d.at("ambient"), "displacement.ambient");
      if (j.contains("model")) {
        throw ConfigError("model", "must be omitted when the displacement is a named family");
      }
      cfg.model = family_model(f);
      cfg.displacement = family_vector(f);
      cfg.family = f;
    } else {
      reject_unknown(d, "displacement", {"coefficients"});
      const auto c = get_number_list(require(d, "coefficients", "displacement"),
                                     "displacement.coefficients");
      cfg.model = model_from_json(require(j, "model", ""), "model");
      if (c.size() != cfg.model.coefficient_count()) {
        throw ConfigError("displacement.coefficients",
                          "has " + std::to_string(c.size()) + " entries, model has K = " +
                              std::to_string(cfg.model.coefficient_count()));
      }
      cfg.displacement = HVector(c);
    }
    if (cfg.displacement->is_zero() && kind != ExperimentKind::Density) {
      throw ConfigError("displacement", "must be non-zero");
    }
  } else if (needs_displacement) {
    throw ConfigError("displacement", "required field missing");
  } else {
    cfg.model = model_from_json(require(j, "model", ""), "model");
  }

  const bool uses_grid = kind == ExperimentKind::CouplingTime || kind == ExperimentKind::Maximality ||
                         kind == ExperimentKind::Infinity || kind == ExperimentKind::Ruin;
  if (uses_grid) {
    cfg.grid = parse_grid(require(j, "grid", ""), "grid", kind == ExperimentKind::CouplingTime);
    if (kind == ExperimentKind::Infinity && cfg.grid->checkpoints.empty()) {
      throw ConfigError("grid.checkpoints", "required for the infinity experiment");
    }
  } else if (j.contains("grid")) {
    throw ConfigError("grid", "not used by the " + to_string(kind) + " experiment");
  }

  auto only_for = [&](const char* key, std::initializer_list<ExperimentKind> kinds) {
    if (!j.contains(key)) return false;
    for (ExperimentKind k : kinds) {
      if (k == kind) return true;
    }
    throw ConfigError(key, "not used by the " + to_string(kind) + " experiment");
  };

  if (only_for("bridge", {ExperimentKind::CouplingTime, ExperimentKind::Maximality,
                          ExperimentKind::Infinity, ExperimentKind::Ruin})) {
    if (!j.at("bridge").is_boolean()) throw ConfigError("bridge", "expected true or false");
    cfg.bridge = j.at("bridge").get<bool>();
  }
  if (only_for("method", {ExperimentKind::CouplingTime})) {
    const json& m = j.at("method");
    if (m != "exact" && m != "grid" && m != "both") {
      throw ConfigError("method", "expected \"exact\", \"grid\" or \"both\"");
    }
    cfg.method = m.get<std::string>();
  }
  if (only_for("lambdas", {ExperimentKind::Ruin})) {
    cfg.lambdas = get_number_list(j.at("lambdas"), "lambdas");
    if (cfg.lambdas.empty()) throw ConfigError("lambdas", "must not be empty");
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
      if (!(cfg.lambdas[i] > 1.0)) throw ConfigError(index_path("lambdas", i), "must be > 1");
    }
  }
  if (only_for("hnorms", {ExperimentKind::Density})) {
    cfg.hnorms = get_number_list(j.at("hnorms"), "hnorms");
    for (std::size_t i = 0; i < cfg.hnorms.size(); ++i) {
      if (!(cfg.hnorms[i] >= 0.0)) throw ConfigError(index_path("hnorms", i), "must be >= 0");
    }
  }
  if (kind == ExperimentKind::Density && cfg.displacement && cfg.displacement->is_zero() &&
      !cfg.hnorms.empty()) {
    throw ConfigError("hnorms", "cannot rescale a zero displacement");
  }
  if (only_for("vectors", {ExperimentKind::Isometry})) {
    const auto v = get_integer(j.at("vectors"), "vectors");
    if (v < 1 || v > 1000) throw ConfigError("vectors", "must lie in [1, 1000]");
    cfg.vectors = static_cast<std::size_t>(v);
  }
  if (j.contains("tolerances")) parse_tolerances(j.at("tolerances"), "tolerances", cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("", path.string() + ":" + std::to_string(line) + ":" +
                              std::to_string(column) + ": JSON syntax error: " + e.what());
  }
  return parse_config(j);
}

}  // namespace bc
