#pragma once

// Coefficient Brownian motions beta_k(t) driving B(t) = sum_k beta_k(t) e_k.
//
// Increments are exact Gaussian draws on the grid: coefficient k of
// replicate r reads the normals of stream (seed, r, lane::coefficient(k)) in
// step order, so a bundle sampled whole and a block streamed on its own see
// identical values.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "bc/rng.hpp"
#include "bc/wiener_space.hpp"

namespace bc {

class TimeGrid {
 public:
  // 0, step, 2 step, ..., horizon. horizon must be an integer multiple of
  // step (relative slack 1e-9); the last point is exactly horizon.
  static TimeGrid uniform(double horizon, double step);
  // Arbitrary strictly increasing times starting at 0.
  static TimeGrid from_times(std::vector<double> times);

  std::size_t size() const noexcept { return count_; }
  double operator[](std::size_t i) const noexcept {
    if (!explicit_.empty()) return explicit_[i];
    return i + 1 == count_ ? horizon_ : static_cast<double>(i) * step_;
  }
  double horizon() const noexcept { return horizon_; }
  bool is_uniform() const noexcept { return explicit_.empty(); }
  // Spacing of a uniform grid (0 for explicit grids).
  double step() const noexcept { return step_; }

  // Index of the grid point equal to t (tolerance 1e-9 relative), or throws.
  std::size_t index_of(double t) const;

 private:
  TimeGrid() = default;

  std::size_t count_ = 0;
  double horizon_ = 0.0;
  double step_ = 0.0;
  std::vector<double> explicit_;
};

// Grid walk over the coefficients of one range, one step at a time.
class PathStream {
 public:
  PathStream(CoeffRange range, const TimeGrid& grid, const RngPolicy& policy,
             std::uint64_t replicate);

  // Current grid index (0 at construction).
  std::size_t index() const noexcept { return index_; }
  bool at_end() const noexcept { return index_ + 1 >= grid_->size(); }
  // beta_k at the current grid point; values()[i] is coefficient range.lo + i.
  std::span<const double> values() const noexcept { return values_; }
  CoeffRange range() const noexcept { return range_; }

  // Advance to the next grid point.
  void step();

 private:
  CoeffRange range_;
  const TimeGrid* grid_;
  std::vector<NormalSequence> normals_;
  std::vector<double> values_;
  std::size_t index_ = 0;
  double uniform_scale_ = 0.0;  // sqrt(step) on uniform grids
};

struct PathBundle {
  std::size_t coefficient_count = 0;
  std::size_t grid_size = 0;
  std::uint64_t replicate = 0;
  RngPolicy policy;
  // Row-major: values[(k - 1) * grid_size + i] = beta_k(t_i).
  std::vector<double> values;

  double at(std::size_t k, std::size_t i) const {
    return values[(k - 1) * grid_size + i];
  }
  // B(t_i) as an H-vector.
  HVector snapshot(std::size_t i) const;
};

PathBundle sample_paths(std::size_t count, const TimeGrid& grid,
                        const RngPolicy& policy, std::uint64_t replicate);

// First time a rate-1 Brownian motion started at a > 0 hits 0, drawn exactly
// as a^2 / Z^2.
double sample_first_passage(double a, const RngPolicy& policy,
                            std::uint64_t replicate);

// Debug dump: header (K, grid length as u64, seed, replicate as u64) followed
// by row-major little-endian float64 values.
void write_bundle(std::ostream& out, const PathBundle& bundle);
PathBundle read_bundle(std::istream& in);

}  // namespace bc
