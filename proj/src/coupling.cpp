#include "bc/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "bc/errors.hpp"
#include "bc/io.hpp"

namespace bc {
namespace {

// Below this the bridge draw cannot succeed (uniforms are >= 2^-54).
constexpr double kNegligibleProbability = 0x1.0p-60;

double dot_range(const HVector& x, std::span<const double> beta,
                 CoeffRange range) {
  double u = 0.0;
  for (std::size_t k = range.lo; k < range.hi; ++k) {
    u += x[k - 1] * beta[k - range.lo];
  }
  return u;
}

// exp(-x) <= 2^-60 for x above this; skipping exp there gives the same answer.
constexpr double kNegligibleExponent = 42.0;

bool bridge_crossed(double level, double u_prev, double u_next, double rate,
                    double dt, const CounterStream& stream,
                    std::uint64_t step) {
  const double gap0 = level - u_prev, gap1 = level - u_next;
  if (gap0 > 0.0 && gap1 > 0.0 && 2.0 * gap0 * gap1 / (rate * dt) > kNegligibleExponent) {
    return false;
  }
  const double p = bridge_crossing_probability(gap0, gap1, rate, dt);
  return p > kNegligibleProbability && stream.uniform(step) < p;
}

// Exact maximum of a Brownian bridge from s0 to s1 over dt at variance rate.
double bridge_maximum(double s0, double s1, double rate, double dt,
                      double uniform) {
  const double d = s1 - s0;
  return 0.5 * (s0 + s1 + std::sqrt(d * d - 2.0 * rate * dt * std::log(uniform)));
}

std::vector<std::size_t> record_indices(const TimeGrid& grid,
                                        const std::vector<double>& times) {
  std::vector<std::size_t> idx;
  if (times.empty()) {
    idx.resize(grid.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  for (double t : times) idx.push_back(grid.index_of(t));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

struct BlockState {
  CoeffRange range;
  const HVector* x;
  double h2;
  double level;
  PathStream path;
  CounterStream crossing;
  CounterStream maximum;
  double u = 0.0;
  bool coupled = false;
  std::optional<double> coupling_time;
  double sup = 1.0;

  double factor() const { return coupled ? 0.0 : 1.0 - 2.0 * u / h2; }
};

void check_plan(const ModelSpec& model, const HVector& x, const BlockPlan& plan) {
  const std::size_t count = model.coefficient_count();
  if (x.size() != count) {
    throw DimensionError("displacement has " + std::to_string(x.size()) +
                         " coefficients, model expects " + std::to_string(count));
  }
  if (plan.blocks.empty() || plan.cuts.size() != plan.blocks.size() + 1 ||
      plan.cuts.front() != 1 || plan.cuts.back() != count + 1) {
    throw DimensionError("block plan does not cover [1, K+1)");
  }
  for (std::size_t n = 1; n <= plan.size(); ++n) {
    const CoeffRange r = plan.range(n);
    if (r.lo >= r.hi) throw DimensionError("block plan cuts are not increasing");
    if (plan.blocks[n - 1].size() != count) {
      throw DimensionError("block " + std::to_string(n) + " has wrong length");
    }
    for (std::size_t k = 1; k <= count; ++k) {
      const double expect = r.contains(k) ? x[k - 1] : 0.0;
      if (plan.blocks[n - 1][k - 1] != expect) {
        throw DimensionError("block " + std::to_string(n) +
                             " does not match the displacement at coefficient " +
                             std::to_string(k));
      }
    }
    if (plan.blocks[n - 1].is_zero()) {
      throw DomainError("block " + std::to_string(n) + " is zero");
    }
  }
}

}  // namespace

HVector reflect(const HVector& x, const HVector& y) {
  if (x.size() != y.size()) throw DimensionError("reflect: length mismatch");
  const double h2 = h_inner(x, x);
  if (h2 == 0.0) throw DomainError("reflection through the zero vector is undefined");
  const double c = 2.0 * h_inner(x, y) / h2;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[i] - c * x[i];
  return HVector(std::move(out));
}

double bridge_crossing_probability(double gap0, double gap1, double rate,
                                   double dt) {
  if (gap0 <= 0.0 || gap1 <= 0.0) return 1.0;
  return std::exp(-2.0 * gap0 * gap1 / (rate * dt));
}

std::optional<double> detect_coupling_time(const HVector& x,
                                           const PathBundle& bundle,
                                           const TimeGrid& grid, bool bridge,
                                           std::size_t block_start) {
  if (x.size() != bundle.coefficient_count) {
    throw DimensionError("displacement and path bundle differ in length");
  }
  if (grid.size() != bundle.grid_size) {
    throw DimensionError("grid and path bundle differ in length");
  }
  const double h2 = h_inner(x, x);
  if (h2 == 0.0) throw DomainError("coupling time undefined for x = 0");
  const double level = 0.5 * h2;
  const CounterStream crossing = bundle.policy.stream(
      bundle.replicate,
      lane::bridge_crossing(static_cast<std::uint32_t>(block_start)));
  std::vector<double> beta(x.size());
  double u_prev = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    for (std::size_t k = 1; k <= x.size(); ++k) beta[k - 1] = bundle.at(k, i);
    const double u = dot_range(x, beta, {1, x.size() + 1});
    if (u >= level) return grid[i];
    if (bridge && bridge_crossed(level, u_prev, u, h2, grid[i] - grid[i - 1],
                                 crossing, i)) {
      return grid[i];
    }
    u_prev = u;
  }
  return std::nullopt;
}

BlockPlan plan_blocks(const ModelSpec& model, const HVector& x) {
  const std::size_t count = model.coefficient_count();
  if (x.size() != count) throw DimensionError("displacement/model length mismatch");
  if (x.is_zero()) throw DomainError("cannot plan blocks for x = 0");

  auto tail = [&](std::size_t r) {
    return w_norm(model, project_block(x, {r, count + 1}));
  };

  BlockPlan plan;
  plan.cuts.push_back(1);
  std::size_t prev = 1;
  for (std::size_t n = 1; prev <= count; ++n) {
    std::size_t first_nonzero = prev;
    while (first_nonzero <= count && x[first_nonzero - 1] == 0.0) ++first_nonzero;
    if (first_nonzero > count) break;  // unreachable: the previous tail was > 0
    const double bound = std::exp2(-static_cast<double>(n) - 1.0);
    std::size_t cut = 0;
    double tau = 0.0;
    for (std::size_t r = first_nonzero + 1; r <= count + 1; ++r) {
      tau = tail(r);
      if (tau <= bound) {
        cut = r;
        break;
      }
    }
    if (cut == 0) {
      throw DomainError("truncation insufficient: no cut meets the tail bound for block " +
                        std::to_string(n));
    }
    if (tau == 0.0) cut = count + 1;  // last block absorbs the remainder
    const HVector block = project_block(x, {prev, cut});
    plan.cuts.push_back(cut);
    plan.blocks.push_back(block);
    plan.tails.push_back(tau);
    plan.block_w_norms.push_back(w_norm(model, block));
    plan.block_h_norms.push_back(h_norm(block));
    prev = cut;
  }
  for (std::size_t n = 1; n < plan.size(); ++n) {
    if (!(plan.block_w_norms[n] < std::exp2(-static_cast<double>(n) + 1.0))) {
      plan.increment_bound_holds = false;
    }
  }
  return plan;
}

BlockPlan single_block_plan(const ModelSpec& model, const HVector& x) {
  const std::size_t count = model.coefficient_count();
  if (x.size() != count) throw DimensionError("displacement/model length mismatch");
  if (x.is_zero()) throw DomainError("single block plan for x = 0");
  BlockPlan plan;
  plan.cuts = {1, count + 1};
  plan.blocks = {x};
  plan.tails = {0.0};
  plan.block_w_norms = {w_norm(model, x)};
  plan.block_h_norms = {h_norm(x)};
  return plan;
}

bool CouplingResult::coupled() const {
  return std::all_of(blocks.begin(), blocks.end(),
                     [](const BlockOutcome& b) { return b.coupling_time.has_value(); });
}

std::optional<double> CouplingResult::coupling_time() const {
  if (!coupled()) return std::nullopt;
  double t = 0.0;
  for (const auto& b : blocks) t = std::max(t, *b.coupling_time);
  return t;
}

CouplingResult run_reflection_coupling(const ModelSpec& model, const HVector& x,
                                       const TimeGrid& grid,
                                       const RngPolicy& policy,
                                       std::uint64_t replicate,
                                       const RunOptions& options) {
  return run_block_coupling(model, x, single_block_plan(model, x), grid, policy,
                            replicate, options);
}

CouplingResult run_block_coupling(const ModelSpec& model, const HVector& x,
                                  const BlockPlan& plan, const TimeGrid& grid,
                                  const RngPolicy& policy,
                                  std::uint64_t replicate,
                                  const RunOptions& options) {
  check_plan(model, x, plan);
  const std::size_t count = model.coefficient_count();
  const std::vector<std::size_t> records = record_indices(grid, options.record_times);

  std::vector<BlockState> blocks;
  blocks.reserve(plan.size());
  for (std::size_t n = 1; n <= plan.size(); ++n) {
    const CoeffRange r = plan.range(n);
    const HVector& xn = plan.blocks[n - 1];
    const double h2 = h_inner(xn, xn);
    const auto start = static_cast<std::uint32_t>(r.lo);
    blocks.push_back(BlockState{r, &xn, h2, 0.5 * h2,
                                PathStream(r, grid, policy, replicate),
                                policy.stream(replicate, lane::bridge_crossing(start)),
                                policy.stream(replicate, lane::bridge_maximum(start)),
                                0.0, false, std::nullopt, 1.0});
  }

  CouplingResult result;
  result.replicate = replicate;
  result.factors.resize(plan.size());

  std::vector<double> delta(count, 0.0);
  auto record = [&](std::size_t i) {
    std::fill(delta.begin(), delta.end(), 0.0);
    std::size_t open = 0;
    for (std::size_t n = 0; n < blocks.size(); ++n) {
      const BlockState& b = blocks[n];
      const double s = b.factor();
      result.factors[n].push_back(s);
      if (b.coupled) continue;
      ++open;
      for (std::size_t k = b.range.lo; k < b.range.hi; ++k) {
        delta[k - 1] = s * (*b.x)[k - 1];
      }
    }
    result.times.push_back(grid[i]);
    result.distance.push_back(open == 0 ? 0.0 : w_norm(model, HVector(delta)));
    result.uncoupled.push_back(open);
    if (options.keep_paths) {
      std::vector<double> base(count), partner(count);
      for (const BlockState& b : blocks) {
        const auto beta = b.path.values();
        const double c = 2.0 * b.u / b.h2;
        for (std::size_t k = b.range.lo; k < b.range.hi; ++k) {
          const double bk = beta[k - b.range.lo];
          base[k - 1] = bk;
          partner[k - 1] = b.coupled ? bk : (*b.x)[k - 1] + bk - c * (*b.x)[k - 1];
        }
      }
      result.base_path.emplace_back(std::move(base));
      result.coupled_path.emplace_back(std::move(partner));
    }
  };

  // Blocks still needing simulation: not coupled and, when tracking the sup,
  // below sup_stop. The run ends when none remain (never with keep_paths).
  auto settled = [&](const BlockState& b) {
    return b.coupled || (options.track_sup && b.sup >= options.sup_stop);
  };
  auto active = static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [&](const BlockState& b) { return !settled(b); }));

  std::size_t next_record = 0;
  if (next_record < records.size() && records[next_record] == 0) {
    record(0);
    ++next_record;
  }
  std::size_t i = 0;
  double t = grid[0];
  while (i + 1 < grid.size() && (active > 0 || options.keep_paths)) {
    ++i;
    const double t_prev = t;
    t = grid[i];
    const double dt = t - t_prev;
    for (BlockState& b : blocks) {
      if (b.coupled) {
        if (options.keep_paths) b.path.step();
        continue;
      }
      const bool was_settled = settled(b);
      b.path.step();
      const double u_prev = b.u;
      b.u = dot_range(*b.x, b.path.values(), b.range);
      bool hit = b.u >= b.level;
      if (!hit && options.bridge) {
        hit = bridge_crossed(b.level, u_prev, b.u, b.h2, dt, b.crossing, i);
      }
      if (options.track_sup) {
        const double s0 = 1.0 - 2.0 * u_prev / b.h2;
        if (hit) {
          b.sup = std::max(b.sup, s0);
        } else {
          const double s1 = 1.0 - 2.0 * b.u / b.h2;
          const double rate = 4.0 / b.h2;
          b.sup = std::max(b.sup, bridge_maximum(s0, s1, rate, dt, b.maximum.uniform(i)));
        }
      }
      if (hit) {
        b.coupled = true;
        b.coupling_time = t;
      }
      if (!was_settled && settled(b)) --active;
    }
    if (next_record < records.size() && records[next_record] == i) {
      record(i);
      ++next_record;
    }
  }
  result.stop_time = grid[i];

  // Everything coupled: the remaining records are identically zero.
  if (!options.keep_paths && std::all_of(blocks.begin(), blocks.end(),
                                         [](const BlockState& b) { return b.coupled; })) {
    for (; next_record < records.size(); ++next_record) {
      result.times.push_back(grid[records[next_record]]);
      result.distance.push_back(0.0);
      result.uncoupled.push_back(0);
      for (auto& f : result.factors) f.push_back(0.0);
    }
  }

  for (const BlockState& b : blocks) {
    BlockOutcome out;
    out.range = b.range;
    out.h_norm = std::sqrt(b.h2);
    out.w_norm = w_norm(model, *b.x);
    out.coupling_time = b.coupling_time;
    out.factor_sup = b.sup;
    result.blocks.push_back(out);
  }
  return result;
}

void write_coupling_csv(std::ostream& out,
                        const std::vector<CouplingResult>& results) {
  out << csv_row({"replicate", "t", "d_W", "n_uncoupled"});
  for (const auto& r : results) {
    for (std::size_t j = 0; j < r.times.size(); ++j) {
      out << csv_row({std::to_string(r.replicate), format_double(r.times[j]),
                      format_double(r.distance[j]), std::to_string(r.uncoupled[j])});
    }
  }
}

}  // namespace bc
