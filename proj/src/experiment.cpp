#include "bc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "bc/analysis.hpp"
#include "bc/coupling.hpp"
#include "bc/errors.hpp"
#include "bc/io.hpp"

namespace bc {
namespace {

using nlohmann::json;

double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const HVector& displacement(const ExperimentConfig& cfg) {
  if (!cfg.displacement) throw ConfigError("displacement", "required field missing");
  return *cfg.displacement;
}

std::vector<double> record_times(const ExperimentConfig& cfg, const TimeGrid& grid) {
  std::vector<double> t{0.0};
  for (double c : cfg.grid->checkpoints) t.push_back(grid[grid.index_of(c)]);
  t.push_back(grid.horizon());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

std::vector<double> checkpoints_or_horizon(const ExperimentConfig& cfg, const TimeGrid& grid) {
  std::vector<double> t;
  for (double c : cfg.grid->checkpoints) t.push_back(grid[grid.index_of(c)]);
  if (t.empty()) t.push_back(grid.horizon());
  return t;
}

// About `points` grid times, denser near 0, always including the horizon.
std::vector<double> law_times(const TimeGrid& grid, std::size_t points = 256) {
  std::vector<double> t;
  const double last = static_cast<double>(grid.size() - 1);
  std::size_t prev = 0;
  for (std::size_t j = 1; j <= points; ++j) {
    const double f = static_cast<double>(j) / static_cast<double>(points);
    const auto idx = static_cast<std::size_t>(std::llround(last * f * f));
    if (idx > prev) {
      t.push_back(grid[idx]);
      prev = idx;
    }
  }
  return t;
}

json check_entry(const std::string& name, bool pass) { return {{"name", name}, {"pass", pass}}; }

json binomial_json(const BinomialCheck& c) {
  return {{"n", c.n},           {"hits", c.hits}, {"empirical", c.empirical},
          {"target", c.target}, {"sigma", c.sigma}, {"z", c.z}};
}

std::vector<HVector> isometry_vectors(const ExperimentConfig& cfg) {
  if (cfg.displacement) return {*cfg.displacement};
  const RngPolicy policy{cfg.seed};
  std::vector<HVector> out;
  const std::size_t count = cfg.model.coefficient_count();
  for (std::size_t v = 0; v < cfg.vectors; ++v) {
    const CounterStream stream = policy.stream(v, lane::auxiliary(0));
    std::vector<double> c(count);
    for (std::size_t k = 0; k < count; ++k) c[k] = stream.normal(k);
    out.emplace_back(std::move(c));
  }
  return out;
}

std::vector<double> density_norms(const ExperimentConfig& cfg) {
  if (cfg.hnorms.empty()) return {h_norm(displacement(cfg))};
  return cfg.hnorms;
}

HVector scaled_to(const HVector& x, double target) {
  const double n = h_norm(x);
  if (n == 0.0) return x;
  return (target / n) * x;
}

HVector gaussian_sample(const ExperimentConfig& cfg, std::size_t replicate) {
  // theta ~ mu: the coefficients of B(1).
  static const TimeGrid unit = TimeGrid::from_times({0.0, 1.0});
  const PathBundle b = sample_paths(cfg.model.coefficient_count(), unit, RngPolicy{cfg.seed}, replicate);
  return b.snapshot(1);
}

// ---------------------------------------------------------------------------
// Per-kind simulation.

ResultTable simulate_coupling_time(const ExperimentConfig& cfg, std::size_t threads) {
  const HVector& x = displacement(cfg);
  const double a = 0.5 * h_norm(x);
  const bool exact = cfg.method != "grid";
  const bool grid_mode = cfg.method != "exact";
  ResultTable t;
  t.columns = {"replicate"};
  if (exact) t.columns.push_back("T_exact");
  if (grid_mode) {
    t.columns.push_back("T_grid");
    t.columns.push_back("censored");
  }
  t.rows.resize(cfg.replicates);
  const RngPolicy policy{cfg.seed};
  std::optional<TimeGrid> grid;
  if (grid_mode) grid = build_grid(cfg);
  RunOptions opt;
  opt.bridge = cfg.bridge;
  opt.record_times = {0.0};
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    std::vector<double> row{static_cast<double>(r)};
    if (exact) row.push_back(sample_first_passage(a, policy, r));
    if (grid_mode) {
      const auto T = run_reflection_coupling(cfg.model, x, *grid, policy, r, opt).coupling_time();
      row.push_back(T.value_or(grid->horizon()));
      row.push_back(T ? 0.0 : 1.0);
    }
    t.rows[r] = std::move(row);
  });
  return t;
}

ResultTable simulate_maximality(const ExperimentConfig& cfg, std::size_t threads) {
  const HVector& x = displacement(cfg);
  const TimeGrid grid = build_grid(cfg);
  ResultTable t;
  t.columns = {"replicate", "T", "coupled"};
  t.rows.resize(cfg.replicates);
  RunOptions opt;
  opt.bridge = cfg.bridge;
  opt.record_times = {0.0};
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    const auto T =
        run_reflection_coupling(cfg.model, x, grid, RngPolicy{cfg.seed}, r, opt).coupling_time();
    t.rows[r] = {static_cast<double>(r), T.value_or(grid.horizon()), T ? 1.0 : 0.0};
  });
  return t;
}

ResultTable simulate_infinity(const ExperimentConfig& cfg, std::size_t threads,
                              json* coupling_times) {
  const HVector& x = displacement(cfg);
  const TimeGrid grid = build_grid(cfg);
  const BlockPlan plan = plan_blocks(cfg.model, x);
  RunOptions opt;
  opt.bridge = cfg.bridge;
  opt.record_times = record_times(cfg, grid);
  std::vector<CouplingResult> results(cfg.replicates);
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    results[r] = run_block_coupling(cfg.model, x, plan, grid, RngPolicy{cfg.seed}, r, opt);
  });
  ResultTable t;
  t.columns = {"replicate", "t", "d_W", "n_uncoupled"};
  json reps = json::array();
  for (const auto& res : results) {
    for (std::size_t j = 0; j < res.times.size(); ++j) {
      t.rows.push_back({static_cast<double>(res.replicate), res.times[j], res.distance[j],
                        static_cast<double>(res.uncoupled[j])});
    }
    json T = json::array();
    for (const auto& b : res.blocks) {
      T.push_back(b.coupling_time ? json(*b.coupling_time) : json(nullptr));
    }
    reps.push_back({{"replicate", res.replicate}, {"T", T}});
  }
  if (coupling_times) {
    *coupling_times = {{"horizon", grid.horizon()}, {"cuts", plan.cuts}, {"replicates", reps}};
  }
  return t;
}

ResultTable simulate_ruin(const ExperimentConfig& cfg, std::size_t threads) {
  const HVector& x = displacement(cfg);
  const TimeGrid grid = build_grid(cfg);
  const double hn = h_norm(x);
  const double wn = w_norm(cfg.model, x);
  RunOptions opt;
  opt.bridge = cfg.bridge;
  opt.track_sup = true;
  opt.sup_stop = *std::max_element(cfg.lambdas.begin(), cfg.lambdas.end());
  opt.record_times = {0.0};
  ResultTable t;
  t.columns = {"replicate", "sup_M", "T", "absorbed", "sup_delta_H", "sup_delta_W"};
  t.rows.resize(cfg.replicates);
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    const auto res = run_reflection_coupling(cfg.model, x, grid, RngPolicy{cfg.seed}, r, opt);
    const BlockOutcome& b = res.blocks.front();
    const auto T = b.coupling_time;
    t.rows[r] = {static_cast<double>(r), b.factor_sup, T.value_or(res.stop_time), T ? 1.0 : 0.0,
                 b.factor_sup * hn, b.factor_sup * wn};
  });
  return t;
}

ResultTable simulate_density(const ExperimentConfig& cfg, std::size_t threads) {
  const HVector& x = displacement(cfg);
  const std::vector<double> norms = density_norms(cfg);
  std::vector<HVector> shifts;
  for (double h : norms) shifts.push_back(cfg.hnorms.empty() ? x : scaled_to(x, h));
  ResultTable t;
  t.columns = {"replicate", "hnorm", "log_density"};
  t.rows.resize(cfg.replicates * norms.size());
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    const HVector theta = gaussian_sample(cfg, r);
    for (std::size_t i = 0; i < norms.size(); ++i) {
      t.rows[r * norms.size() + i] = {static_cast<double>(r), norms[i],
                                      cameron_martin_log_density(shifts[i], theta)};
    }
  });
  return t;
}

ResultTable simulate_isometry(const ExperimentConfig& cfg, std::size_t threads) {
  const std::vector<HVector> vectors = isometry_vectors(cfg);
  ResultTable t;
  t.columns = {"replicate", "vector", "pairing"};
  t.rows.resize(cfg.replicates * vectors.size());
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    const HVector theta = gaussian_sample(cfg, r);
    for (std::size_t v = 0; v < vectors.size(); ++v) {
      t.rows[r * vectors.size() + v] = {static_cast<double>(r), static_cast<double>(v),
                                        h_inner(vectors[v], theta)};
    }
  });
  return t;
}

// ---------------------------------------------------------------------------
// Analytic curves.

ResultTable law_table(const ExperimentConfig& cfg) {
  ResultTable t;
  switch (cfg.kind) {
    case ExperimentKind::CouplingTime: {
      const double a = 0.5 * h_norm(displacement(cfg));
      t.columns = {"t", "cdf"};
      if (cfg.method == "exact") {
        for (int j = 1; j <= 256; ++j) {
          const double p = (j - 0.5) / 256.0;
          const double q = first_passage_quantile(a, p);
          t.rows.push_back({q, first_passage_cdf(a, q)});
        }
      } else {
        for (double s : law_times(build_grid(cfg))) t.rows.push_back({s, first_passage_cdf(a, s)});
      }
      break;
    }
    case ExperimentKind::Maximality: {
      const double h = h_norm(displacement(cfg));
      t.columns = {"t", "max_coupling_prob", "tv_distance"};
      for (double s : law_times(build_grid(cfg))) {
        const double p = max_coupling_prob(h, s);
        t.rows.push_back({s, p, 1.0 - p});
      }
      break;
    }
    case ExperimentKind::Infinity: {
      const BlockPlan plan = plan_blocks(cfg.model, displacement(cfg));
      t.columns = {"t", "p_all_coupled", "expected_uncoupled"};
      for (double s : law_times(build_grid(cfg))) {
        double all = 1.0, open = 0.0;
        for (double hn : plan.block_h_norms) {
          const double p = max_coupling_prob(hn, s);
          all *= p;
          open += 1.0 - p;
        }
        t.rows.push_back({s, all, open});
      }
      break;
    }
    case ExperimentKind::Ruin: {
      t.columns = {"lambda", "p_sup_at_least"};
      for (int j = 0; j <= 190; ++j) {
        const double lambda = 1.0 + 0.1 * j;
        t.rows.push_back({lambda, 1.0 / lambda});
      }
      break;
    }
    case ExperimentKind::Density: {
      t.columns = {"hnorm", "join_mass", "tv_distance"};
      const auto norms = density_norms(cfg);
      const double top = std::max(4.0, 2.0 * *std::max_element(norms.begin(), norms.end()));
      for (int j = 0; j <= 200; ++j) {
        const double h = top * j / 200.0;
        t.rows.push_back({h, join_mass(h), tv_distance(h)});
      }
      break;
    }
    case ExperimentKind::Isometry: {
      t.columns = {"vector", "h_norm_squared"};
      const auto vectors = isometry_vectors(cfg);
      for (std::size_t v = 0; v < vectors.size(); ++v) {
        t.rows.push_back({static_cast<double>(v), h_inner(vectors[v], vectors[v])});
      }
      break;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Summaries.

json displacement_info(const ExperimentConfig& cfg, const HVector& x) {
  const double hn = h_norm(x);
  json info = {{"h_norm", hn},
               {"w_norm", w_norm(cfg.model, x)},
               {"h_norm_exceeds_threshold", hn > cfg.tolerances.divergence_threshold}};
  if (cfg.family) {
    info["family"] = cfg.family->name;
    info["label"] = "H-divergent family";
    info["K"] = cfg.family->count;
  }
  return info;
}

void summarize_coupling_time(const ExperimentConfig& cfg, const ResultTable& r, json& checks,
                             json& info) {
  const double a = 0.5 * h_norm(displacement(cfg));
  const LawSpec law = LawSpec::first_passage(a);
  info["level"] = a;
  if (cfg.method != "grid") {
    const auto ks = ks_statistic(EmpiricalSample(r.column("T_exact")), law);
    json c = check_entry("ks_exact", ks.statistic <= cfg.tolerances.ks_exact);
    c.update({{"law", ks.law}, {"n", ks.n}, {"statistic", ks.statistic},
              {"critical_value", cfg.tolerances.ks_exact}, {"ks_99_band", ks.critical_value}});
    checks.push_back(c);
  }
  if (cfg.method != "exact") {
    const auto times = r.column("T_grid");
    const auto flags = r.column("censored");
    std::vector<bool> censored(flags.size());
    for (std::size_t i = 0; i < flags.size(); ++i) censored[i] = flags[i] != 0.0;
    const auto ks = ks_statistic(EmpiricalSample(times, censored), law);
    json c = check_entry("ks_grid", ks.statistic <= cfg.tolerances.ks_grid);
    c.update({{"law", ks.law}, {"n", ks.n}, {"censored", ks.censored}, {"statistic", ks.statistic},
              {"critical_value", cfg.tolerances.ks_grid}, {"ks_99_band", ks.critical_value},
              {"bridge", cfg.bridge}, {"step", cfg.grid->step}});
    checks.push_back(c);
    const double horizon = resolve_horizon(cfg);
    const double analytic = 1.0 - first_passage_cdf(a, horizon);
    json h = check_entry("censoring_horizon", analytic <= cfg.tolerances.censored_fraction);
    h.update({{"horizon", horizon}, {"analytic_censored_probability", analytic},
              {"empirical_censored_fraction", static_cast<double>(ks.censored) / ks.n},
              {"bound", cfg.tolerances.censored_fraction}});
    checks.push_back(h);
  }
}

void summarize_maximality(const ExperimentConfig& cfg, const ResultTable& r, json& checks,
                          json& info) {
  const TimeGrid grid = build_grid(cfg);
  const double hn = h_norm(displacement(cfg));
  const auto T = r.column("T");
  const auto coupled = r.column("coupled");
  info["h_norm"] = hn;
  for (double tc : checkpoints_or_horizon(cfg, grid)) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < T.size(); ++i) hits += coupled[i] != 0.0 && T[i] <= tc;
    const auto c = binomial_check(hits, T.size(), max_coupling_prob(hn, tc), cfg.tolerances.sigma_width);
    json e = check_entry("coupled_by_t", c.pass);
    e.update(binomial_json(c));
    e["t"] = tc;
    e["law"] = LawSpec::tv_at_time(hn, tc).name();
    e["tv_distance"] = 1.0 - c.target;
    checks.push_back(e);
  }
}

void summarize_infinity(const ExperimentConfig& cfg, const ResultTable& r, json& checks,
                        json& info) {
  const TimeGrid grid = build_grid(cfg);
  const BlockPlan plan = plan_blocks(cfg.model, displacement(cfg));
  bool tails_ok = true;
  for (std::size_t n = 1; n < plan.size(); ++n) {
    tails_ok = tails_ok && plan.tails[n - 1] <= std::exp2(-static_cast<double>(n) - 1.0);
  }
  tails_ok = tails_ok && plan.tails.back() == 0.0;
  json p = check_entry("plan_tail_schedule", tails_ok);
  p.update({{"cuts", plan.cuts}, {"tails", plan.tails}});
  checks.push_back(p);
  json inc = check_entry("plan_increment_bound", plan.increment_bound_holds);
  inc["block_w_norms"] = plan.block_w_norms;
  checks.push_back(inc);
  info["block_h_norms"] = plan.block_h_norms;

  const std::size_t ti = r.column_index("t"), di = r.column_index("d_W"),
                    ui = r.column_index("n_uncoupled");
  auto values_at = [&](double t, std::size_t col) {
    std::vector<double> v;
    for (const auto& row : r.rows) {
      if (row[ti] == t) v.push_back(row[col]);
    }
    return v;
  };
  const auto initial = values_at(0.0, di);
  const double d0 = initial.empty() ? NAN : initial.front();
  info["initial_distance"] = d0;

  json medians = json::array();
  std::vector<double> meds;
  for (double tc : checkpoints_or_horizon(cfg, grid)) {
    const double m = median(values_at(tc, di));
    meds.push_back(m);
    medians.push_back({{"t", tc}, {"median_d_W", m}});
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < meds.size(); ++i) decreasing = decreasing && meds[i] < meds[i - 1];
  json dec = check_entry("median_strictly_decreasing", decreasing);
  dec["medians"] = medians;
  checks.push_back(dec);
  const double ratio = meds.back() / d0;
  json fin = check_entry("final_median_fraction", ratio <= cfg.tolerances.final_median_fraction);
  fin.update({{"final_median", meds.back()}, {"initial_distance", d0}, {"ratio", ratio},
              {"bound", cfg.tolerances.final_median_fraction}});
  checks.push_back(fin);

  const auto open_at_horizon = values_at(grid.horizon(), ui);
  const auto all = static_cast<double>(
      std::count(open_at_horizon.begin(), open_at_horizon.end(), 0.0));
  info["fraction_all_coupled_by_horizon"] = all / static_cast<double>(open_at_horizon.size());
}

void summarize_ruin(const ExperimentConfig& cfg, const ResultTable& r, json& checks, json& info) {
  const auto sups = r.column("sup_M");
  const auto absorbed = r.column("absorbed");
  const double stop = *std::max_element(cfg.lambdas.begin(), cfg.lambdas.end());
  std::size_t censored = 0;
  for (std::size_t i = 0; i < sups.size(); ++i) censored += absorbed[i] == 0.0 && sups[i] < stop;
  for (double lambda : cfg.lambdas) {
    const auto rep = ruin_check(lambda, sups);
    const auto c = binomial_check(rep.check.hits, rep.check.n, rep.check.target, cfg.tolerances.sigma_width);
    json e = check_entry("sup_at_least_lambda", c.pass);
    e.update(binomial_json(c));
    e["lambda"] = lambda;
    checks.push_back(e);
  }
  const double frac = static_cast<double>(censored) / static_cast<double>(sups.size());
  json cen = check_entry("censored_fraction", frac <= cfg.tolerances.censored_fraction);
  cen.update({{"censored", censored}, {"fraction", frac}, {"bound", cfg.tolerances.censored_fraction}});
  checks.push_back(cen);

  // Two readings of the deviation bound for block n: threshold n(n+1) gives
  // probability 1/(n(n+1)); threshold n(n+1)/2 gives 2/(n(n+1)).
  json readings = json::array();
  auto frac_at_least = [&](double level) {
    return static_cast<double>(std::count_if(sups.begin(), sups.end(),
                                             [&](double s) { return s >= level; })) /
           static_cast<double>(sups.size());
  };
  for (int n = 1; n * (n + 1) <= stop; ++n) {
    const double full = n * (n + 1);
    readings.push_back({{"n", n},
                        {"threshold_full", full},
                        {"empirical_full", frac_at_least(full)},
                        {"target_full", 1.0 / full},
                        {"threshold_half", full / 2},
                        {"empirical_half", frac_at_least(full / 2)},
                        {"target_half", std::min(1.0, 2.0 / full)}});
  }
  info["deviation_bound_readings"] = readings;
  info["delta_h_norm_at_start"] = h_norm(displacement(cfg));
  info["delta_w_norm_at_start"] = w_norm(cfg.model, displacement(cfg));
  info["sup_stop"] = stop;
}

void summarize_density(const ExperimentConfig& cfg, const ResultTable& r, json& checks,
                       json& info) {
  const std::size_t hi = r.column_index("hnorm"), li = r.column_index("log_density");
  for (double h : density_norms(cfg)) {
    std::vector<double> weights, linear;
    for (const auto& row : r.rows) {
      if (row[hi] != h) continue;
      weights.push_back(std::exp(row[li]));
      linear.push_back(row[li] + 0.5 * h * h);
    }
    const auto m = mean_check(weights, 1.0, cfg.tolerances.sigma_width);
    json e = check_entry("mean_density_is_one", m.pass);
    e.update({{"hnorm", h}, {"n", m.n}, {"mean", m.mean}, {"standard_error", m.standard_error},
              {"join_mass", join_mass(h)}, {"tv_distance", tv_distance(h)}});
    if (h > 0.0) {
      const auto v = variance_check(linear, h * h, cfg.tolerances.sigma_width);
      e["linear_term_variance"] = v.sample_variance;
      e["linear_term_variance_target"] = h * h;
    }
    checks.push_back(e);
  }
  if (cfg.family) {
    // Sum of a_k^2 over growing truncations: the variance of the
    // log-density, unbounded in K for the divergent family.
    json growth = json::array();
    const HVector& x = displacement(cfg);
    double s = 0.0;
    for (std::size_t k = 1; k <= x.size(); ++k) {
      s += x[k - 1] * x[k - 1];
      if ((k & (k - 1)) == 0 || k == x.size()) growth.push_back({{"K", k}, {"variance", s}});
    }
    info["variance_by_truncation"] = growth;
  }
}

void summarize_isometry(const ExperimentConfig& cfg, const ResultTable& r, json& checks,
                        json& info) {
  const auto vectors = isometry_vectors(cfg);
  const std::size_t vi = r.column_index("vector"), pi = r.column_index("pairing");
  json listed = json::array();
  for (std::size_t v = 0; v < vectors.size(); ++v) {
    std::vector<double> pairing;
    for (const auto& row : r.rows) {
      if (row[vi] == static_cast<double>(v)) pairing.push_back(row[pi]);
    }
    const double target = h_inner(vectors[v], vectors[v]);
    const auto c = variance_check(pairing, target, cfg.tolerances.sigma_width);
    json e = check_entry("pairing_variance", c.pass);
    e.update({{"vector", v}, {"n", c.n}, {"sample_variance", c.sample_variance},
              {"h_norm_squared", target}, {"relative_band", c.band}});
    checks.push_back(e);
    const auto coeffs = vectors[v].coeffs();
    listed.push_back(std::vector<double>(coeffs.begin(), coeffs.end()));
  }
  info["vectors"] = listed;
}

std::string format_table_value(double v) { return format_double(v); }

}  // namespace

std::string ResultTable::to_csv() const {
  std::string out = csv_row([&] {
    std::vector<std::string> h;
    for (const auto& c : columns) h.push_back(csv_field(c));
    return h;
  }());
  for (const auto& row : rows) {
    std::vector<std::string> f;
    f.reserve(row.size());
    for (double v : row) f.push_back(format_table_value(v));
    out += csv_row(f);
  }
  return out;
}

ResultTable ResultTable::from_csv(const std::string& text) {
  ResultTable t;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (header) {
      t.columns = fields;
      header = false;
      continue;
    }
    if (fields.size() != t.columns.size()) throw IoError("CSV row has the wrong field count");
    std::vector<double> row;
    for (const auto& f : fields) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size()) throw IoError("bad CSV number: " + f);
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::size_t ResultTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DomainError("no column named " + name);
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> ResultTable::column(const std::string& name) const {
  const std::size_t i = column_index(name);
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& row : rows) v.push_back(row[i]);
  return v;
}

std::size_t default_thread_count() {
  if (const char* env = std::getenv("BC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double resolve_horizon(const ExperimentConfig& cfg) {
  if (!cfg.grid) throw ConfigError("grid", "required field missing");
  if (!cfg.grid->horizon_auto) return cfg.grid->horizon;
  const double a = 0.5 * h_norm(displacement(cfg));
  const double q = first_passage_quantile(a, 1.0 - cfg.tolerances.censored_fraction);
  const double cells = std::ceil(q / cfg.grid->step);
  return cells * cfg.grid->step;
}

TimeGrid build_grid(const ExperimentConfig& cfg) {
  return TimeGrid::uniform(resolve_horizon(cfg), cfg.grid->step);
}

nlohmann::json summarize(const ExperimentConfig& cfg, const ResultTable& results) {
  json checks = json::array();
  json info = json::object();
  if (cfg.displacement) info["displacement"] = displacement_info(cfg, *cfg.displacement);
  switch (cfg.kind) {
    case ExperimentKind::CouplingTime: summarize_coupling_time(cfg, results, checks, info); break;
    case ExperimentKind::Maximality: summarize_maximality(cfg, results, checks, info); break;
    case ExperimentKind::Infinity: summarize_infinity(cfg, results, checks, info); break;
    case ExperimentKind::Ruin: summarize_ruin(cfg, results, checks, info); break;
    case ExperimentKind::Density: summarize_density(cfg, results, checks, info); break;
    case ExperimentKind::Isometry: summarize_isometry(cfg, results, checks, info); break;
  }
  bool pass = true;
  for (const auto& c : checks) pass = pass && c.at("pass").get<bool>();
  json s = {{"schema", 1},
            {"kind", to_string(cfg.kind)},
            {"seed", cfg.seed},
            {"replicates", cfg.replicates},
            {"model", model_to_json(cfg.model)},
            {"tolerances", tolerances_to_json(cfg.tolerances)},
            {"overrides", cfg.overridden},
            {"checks", checks},
            {"info", info},
            {"pass", pass}};
  if (cfg.grid) {
    s["grid"] = {{"horizon", resolve_horizon(cfg)}, {"step", cfg.grid->step},
                 {"checkpoints", cfg.grid->checkpoints}, {"bridge", cfg.bridge}};
  }
  return s;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, std::size_t threads) {
  ExperimentOutput out;
  switch (cfg.kind) {
    case ExperimentKind::CouplingTime: out.results = simulate_coupling_time(cfg, threads); break;
    case ExperimentKind::Maximality: out.results = simulate_maximality(cfg, threads); break;
    case ExperimentKind::Infinity: {
      json side;
      out.results = simulate_infinity(cfg, threads, &side);
      out.coupling_times = side;
      break;
    }
    case ExperimentKind::Ruin: out.results = simulate_ruin(cfg, threads); break;
    case ExperimentKind::Density: out.results = simulate_density(cfg, threads); break;
    case ExperimentKind::Isometry: out.results = simulate_isometry(cfg, threads); break;
  }
  out.law = law_table(cfg);
  out.summary = summarize(cfg, out.results);
  return out;
}

std::string results_columns_help() {
  return "results.csv columns by kind:\n"
         "  coupling-time  replicate,T_exact,T_grid,censored (T_exact or T_grid/censored\n"
         "                 dropped when method is grid or exact)\n"
         "  maximality     replicate,T,coupled\n"
         "  infinity       replicate,t,d_W,n_uncoupled (at 0, checkpoints, horizon)\n"
         "  ruin           replicate,sup_M,T,absorbed,sup_delta_H,sup_delta_W\n"
         "  density        replicate,hnorm,log_density\n"
         "  isometry       replicate,vector,pairing\n";
}

int run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                     std::size_t threads) {
  const ExperimentOutput out = run_experiment(cfg, threads);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file_atomic(out_dir / "results.csv", out.results.to_csv());
  write_file_atomic(out_dir / "law.csv", out.law.to_csv());
  write_file_atomic(out_dir / "summary.json", out.summary.dump(2) + "\n");
  if (out.coupling_times) {
    write_file_atomic(out_dir / "coupling_times.json", out.coupling_times->dump() + "\n");
  }
  return out.pass() ? 0 : 1;
}

std::string validation_report(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s.precision(10);
  s << "OK\n";
  s << "kind: " << to_string(cfg.kind) << "\n";
  s << "model: " << model_to_json(cfg.model).dump() << "\n";
  s << "K: " << cfg.model.coefficient_count() << "\n";
  s << "replicates: " << cfg.replicates << ", seed: " << cfg.seed << "\n";
  if (cfg.family) s << "displacement: " << cfg.family->name << " (H-divergent family)\n";
  if (cfg.displacement) {
    const HVector& x = *cfg.displacement;
    s << "first coefficients:";
    for (std::size_t k = 0; k < std::min<std::size_t>(10, x.size()); ++k) s << " " << x[k];
    s << "\n";
    const double hn = h_norm(x);
    s << "h_norm: " << hn;
    if (hn > cfg.tolerances.divergence_threshold) s << " (exceeds divergence threshold)";
    s << "\nw_norm: " << w_norm(cfg.model, x) << "\n";
    s << "W-tail after r coefficients:\n";
    for (std::size_t r = 0; r <= std::min<std::size_t>(10, x.size()); ++r) {
      s << "  r=" << r << "  " << w_norm(cfg.model, project_block(x, {r + 1, x.size() + 1}));
      if (cfg.family && cfg.family->rho < 1.0) {
        // Tail of the untruncated family: rho^(r+1) times 1/sqrt(1 - rho^2) in L2.
        const double rho = cfg.family->rho;
        double ref = std::pow(rho, static_cast<double>(r + 1));
        if (cfg.family->ambient == AmbientNorm::L2) ref /= std::sqrt(1.0 - rho * rho);
        s << "  (infinite-K reference " << ref << ")";
      }
      s << "\n";
    }
  }
  if (cfg.grid) {
    s << "grid: horizon " << resolve_horizon(cfg) << ", step " << cfg.grid->step << "\n";
  }
  if (cfg.kind == ExperimentKind::Infinity) {
    const BlockPlan plan = plan_blocks(cfg.model, *cfg.displacement);
    s << "block plan (" << plan.size() << " blocks):\n";
    for (std::size_t n = 1; n <= plan.size(); ++n) {
      s << "  n=" << n << "  [" << plan.cuts[n - 1] << ", " << plan.cuts[n] << ")  tail "
        << plan.tails[n - 1] << "  |x_n|_W " << plan.block_w_norms[n - 1] << "  |x_n|_H "
        << plan.block_h_norms[n - 1] << "\n";
    }
    s << "increment bound |x_{n+1}|_W < 2^{-n+1}: "
      << (plan.increment_bound_holds ? "holds" : "VIOLATED") << "\n";
  }
  return s.str();
}

}  // namespace bc
