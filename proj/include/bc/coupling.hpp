#pragma once

// Reflection couplings of Brownian motions on a truncated abstract Wiener
// space.
//
// For a displacement x in H the partner of B is
//     Bt(t) = x + B(t) - 2 <x, B(t)>_H / |x|_H^2 * x
// until the scalar <x, B(t)> first reaches |x|_H^2 / 2, after which Bt = B.
// The difference is Delta(t) = s(t) x with s(t) = 1 - 2 <x, B(t)> / |x|^2, a
// Brownian motion of rate 4 / |x|^2 started at 1 and absorbed at 0.
//
// The block coupling splits the coefficient index set into consecutive
// blocks [r_{n-1}, r_n) and runs one such reflection per block. Blocks read
// disjoint coefficient streams and are therefore independent.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include "bc/rng.hpp"
#include "bc/simulation.hpp"
#include "bc/wiener_space.hpp"

namespace bc {

// y - 2 <x,y>/|x|^2 x. Throws DomainError when x = 0.
HVector reflect(const HVector& x, const HVector& y);

// Probability that a Brownian bridge of variance rate `rate` over a step of
// length dt, starting at distance gap0 > 0 below a level and ending at gap1 > 0
// below it, touches the level in between.
double bridge_crossing_probability(double gap0, double gap1, double rate,
                                   double dt);

// First grid time t_i with <x, B(t_i)> >= |x|^2 / 2. With `bridge` set, each
// step that stays below the level is also tested against an exact Brownian
// bridge crossing draw taken from lane::bridge_crossing(block_start) of the
// bundle's stream; a crossing inside (t_{i-1}, t_i] is reported as t_i.
std::optional<double> detect_coupling_time(const HVector& x,
                                           const PathBundle& bundle,
                                           const TimeGrid& grid,
                                           bool bridge = false,
                                           std::size_t block_start = 1);

struct BlockPlan {
  // r_0 = 1 < r_1 < ... < r_N = K + 1 (1-based, half-open blocks).
  std::vector<std::size_t> cuts;
  // x_n = projection of x on [r_{n-1}, r_n).
  std::vector<HVector> blocks;
  // tails[n-1] = |x - (x_1 + ... + x_n)|_W.
  std::vector<double> tails;
  std::vector<double> block_w_norms;
  std::vector<double> block_h_norms;
  // |x_{n+1}|_W < 2^{-n+1} for every n >= 1.
  bool increment_bound_holds = true;

  std::size_t size() const noexcept { return blocks.size(); }
  CoeffRange range(std::size_t n) const { return {cuts[n - 1], cuts[n]}; }
};

// Greedy plan: each cut r_n is the smallest index past r_{n-1} that keeps the
// block non-zero and brings the W-tail to at most 2^{-n-1}; once the tail is
// zero the block is extended to K + 1.
BlockPlan plan_blocks(const ModelSpec& model, const HVector& x);

// The whole index range as one block.
BlockPlan single_block_plan(const ModelSpec& model, const HVector& x);

struct RunOptions {
  bool bridge = true;
  // Track sup of each block's factor process, with exact bridge maxima.
  bool track_sup = false;
  // Stop once every block is coupled or has factor sup >= sup_stop.
  double sup_stop = std::numeric_limits<double>::infinity();
  // Times (grid points) at which to record; empty means every grid point.
  std::vector<double> record_times;
  // Keep B and Bt at the recorded times.
  bool keep_paths = false;
};

struct BlockOutcome {
  CoeffRange range;
  double h_norm = 0.0;
  double w_norm = 0.0;
  std::optional<double> coupling_time;
  // sup of the factor process over [0, T_n], or up to the stop time.
  double factor_sup = 1.0;
};

struct CouplingResult {
  std::uint64_t replicate = 0;
  std::vector<double> times;
  // |Bt(t) - B(t)|_W at the recorded times.
  std::vector<double> distance;
  std::vector<std::size_t> uncoupled;
  // factors[n][j]: s_n at times[j] (0 once block n has coupled).
  std::vector<std::vector<double>> factors;
  std::vector<BlockOutcome> blocks;
  std::vector<HVector> base_path;
  std::vector<HVector> coupled_path;
  // Grid time at which the simulation stopped.
  double stop_time = 0.0;

  bool coupled() const;
  // max_n T_n when all blocks coupled.
  std::optional<double> coupling_time() const;
};

CouplingResult run_reflection_coupling(const ModelSpec& model, const HVector& x,
                                       const TimeGrid& grid,
                                       const RngPolicy& policy,
                                       std::uint64_t replicate,
                                       const RunOptions& options = {});

CouplingResult run_block_coupling(const ModelSpec& model, const HVector& x,
                                  const BlockPlan& plan, const TimeGrid& grid,
                                  const RngPolicy& policy,
                                  std::uint64_t replicate,
                                  const RunOptions& options = {});

// `replicate,t,d_W,n_uncoupled` rows for each result.
void write_coupling_csv(std::ostream& out,
                        const std::vector<CouplingResult>& results);

}  // namespace bc
