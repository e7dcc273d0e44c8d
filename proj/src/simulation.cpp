#include "bc/simulation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "bc/errors.hpp"

namespace bc {

TimeGrid TimeGrid::uniform(double horizon, double step) {
  if (!(step > 0.0) || !(horizon > 0.0) || !std::isfinite(horizon)) {
    throw DomainError("uniform grid needs horizon > 0 and step > 0");
  }
  const double cells = std::round(horizon / step);
  if (std::abs(cells * step - horizon) > 1e-9 * horizon || cells < 1.0) {
    throw DomainError("horizon " + std::to_string(horizon) +
                      " is not a multiple of step " + std::to_string(step));
  }
  TimeGrid grid;
  grid.count_ = static_cast<std::size_t>(cells) + 1;
  grid.horizon_ = horizon;
  grid.step_ = step;
  return grid;
}

TimeGrid TimeGrid::from_times(std::vector<double> times) {
  if (times.empty()) throw DomainError("time grid is empty");
  if (times.front() != 0.0) throw DomainError("time grid must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]) || !std::isfinite(times[i])) {
      throw DomainError("time grid must be strictly increasing and finite");
    }
  }
  TimeGrid grid;
  grid.count_ = times.size();
  grid.horizon_ = times.back();
  grid.explicit_ = std::move(times);
  return grid;
}

std::size_t TimeGrid::index_of(double t) const {
  const double slack = 1e-9 * std::max(1.0, std::abs(t));
  if (is_uniform()) {
    const double i = std::round(t / step_);
    if (i >= 0.0 && i < static_cast<double>(count_)) {
      const auto idx = static_cast<std::size_t>(i);
      if (std::abs((*this)[idx] - t) <= slack) return idx;
    }
  } else {
    auto it = std::lower_bound(explicit_.begin(), explicit_.end(), t - slack);
    if (it != explicit_.end() && std::abs(*it - t) <= slack) {
      return static_cast<std::size_t>(it - explicit_.begin());
    }
  }
  throw DomainError("time " + std::to_string(t) + " is not a grid point");
}

PathStream::PathStream(CoeffRange range, const TimeGrid& grid,
                       const RngPolicy& policy, std::uint64_t replicate)
    : range_(range), grid_(&grid), values_(range.length(), 0.0) {
  if (grid.size() == 0) throw DomainError("empty time grid");
  if (range.lo < 1 || range.hi < range.lo) throw DomainError("bad coefficient range");
  if (grid.is_uniform()) uniform_scale_ = std::sqrt(grid.step());
  normals_.reserve(range.length());
  for (std::size_t k = range.lo; k < range.hi; ++k) {
    normals_.emplace_back(
        policy.stream(replicate, lane::coefficient(static_cast<std::uint32_t>(k))));
  }
}

void PathStream::step() {
  if (at_end()) throw DomainError("path stream advanced past the horizon");
  // Interior steps of a uniform grid share one scale; the final step may be
  // a rounding-level different.
  const double scale = uniform_scale_ > 0.0 && index_ + 2 < grid_->size()
                           ? uniform_scale_
                           : std::sqrt((*grid_)[index_ + 1] - (*grid_)[index_]);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] += scale * normals_[i].next();
  }
  ++index_;
}

HVector PathBundle::snapshot(std::size_t i) const {
  std::vector<double> c(coefficient_count);
  for (std::size_t k = 1; k <= coefficient_count; ++k) c[k - 1] = at(k, i);
  return HVector(std::move(c));
}

PathBundle sample_paths(std::size_t count, const TimeGrid& grid,
                        const RngPolicy& policy, std::uint64_t replicate) {
  if (count < 1) throw DomainError("sample_paths needs K >= 1");
  if (grid.size() == 0) throw DomainError("empty time grid");
  PathBundle bundle;
  bundle.coefficient_count = count;
  bundle.grid_size = grid.size();
  bundle.replicate = replicate;
  bundle.policy = policy;
  bundle.values.assign(count * grid.size(), 0.0);
  PathStream stream({1, count + 1}, grid, policy, replicate);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    stream.step();
    const auto v = stream.values();
    for (std::size_t k = 0; k < count; ++k) {
      bundle.values[k * grid.size() + i] = v[k];
    }
  }
  return bundle;
}

double sample_first_passage(double a, const RngPolicy& policy,
                            std::uint64_t replicate) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw DomainError("first-passage level must be positive, got " +
                      std::to_string(a));
  }
  const double z = policy.stream(replicate, lane::first_passage()).normal(0);
  return (a * a) / (z * z);
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw IoError("truncated path bundle");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_bundle(std::ostream& out, const PathBundle& bundle) {
  put_u64(out, bundle.coefficient_count);
  put_u64(out, bundle.grid_size);
  put_u64(out, bundle.policy.master_seed);
  put_u64(out, bundle.replicate);
  for (double v : bundle.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("failed writing path bundle");
}

PathBundle read_bundle(std::istream& in) {
  PathBundle bundle;
  bundle.coefficient_count = get_u64(in);
  bundle.grid_size = get_u64(in);
  bundle.policy.master_seed = get_u64(in);
  bundle.replicate = get_u64(in);
  const std::uint64_t n = bundle.coefficient_count * bundle.grid_size;
  bundle.values.resize(n);
  for (auto& v : bundle.values) v = std::bit_cast<double>(get_u64(in));
  return bundle;
}

}  // namespace bc
