#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "bc/errors.hpp"
#include "bc/rng.hpp"
#include "bc/simulation.hpp"

using bc::RngPolicy;
using bc::TimeGrid;

namespace {

// Reference CDF and KS distance written directly against std::erfc so the
// checks do not route through the analysis module.
double levy_cdf(double a, double t) {
  return t <= 0 ? 0.0 : std::erfc(a / std::sqrt(2.0 * t));
}

double ks_distance(std::vector<double> draws, double a) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = levy_cdf(a, draws[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

std::uint64_t fnv1a(const std::vector<double>& values) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  using B = bc::PhiloxBlock;
  EXPECT_EQ(bc::philox4x32(B{0, 0, 0, 0}, {0, 0}),
            (B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(bc::philox4x32(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                           {0xffffffff, 0xffffffff}),
            (B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(bc::philox4x32(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                           {0xa4093822, 0x299f31d0}),
            (B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterStream, UniformIsOpenAndStreamsDiffer) {
  const RngPolicy policy{42};
  const auto a = policy.stream(0, bc::lane::coefficient(1));
  const auto b = policy.stream(0, bc::lane::coefficient(2));
  const auto c = policy.stream(1, bc::lane::coefficient(1));
  int same = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = a.uniform(i);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    same += (u == b.uniform(i)) + (u == c.uniform(i));
  }
  EXPECT_EQ(same, 0);
}

TEST(TimeGrid, UniformAndExplicit) {
  const auto g = TimeGrid::uniform(1.0, 0.25);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[4], 1.0);
  EXPECT_EQ(g.index_of(0.5), 2u);
  EXPECT_THROW(g.index_of(0.3), bc::DomainError);
  EXPECT_THROW(TimeGrid::uniform(1.0, 0.3), bc::DomainError);
  EXPECT_THROW(TimeGrid::from_times({}), bc::DomainError);
  EXPECT_THROW(TimeGrid::from_times({0.1, 0.2}), bc::DomainError);
  EXPECT_THROW(TimeGrid::from_times({0.0, 0.2, 0.2}), bc::DomainError);
  const auto e = TimeGrid::from_times({0.0, 1.0, 4.0});
  EXPECT_EQ(e.index_of(4.0), 2u);
  EXPECT_EQ(e.horizon(), 4.0);
}

TEST(SamplePaths, StartsAtZero) {
  const auto grid = TimeGrid::uniform(2.0, 0.1);
  const auto bundle = bc::sample_paths(7, grid, RngPolicy{3}, 9);
  for (std::size_t k = 1; k <= 7; ++k) EXPECT_EQ(bundle.at(k, 0), 0.0);
}

TEST(SamplePaths, Errors) {
  const auto grid = TimeGrid::uniform(1.0, 0.5);
  EXPECT_THROW(bc::sample_paths(0, grid, RngPolicy{1}, 0), bc::DomainError);
}

TEST(SamplePaths, Deterministic) {
  const auto grid = TimeGrid::uniform(1.0, 0.01);
  const auto a = bc::sample_paths(5, grid, RngPolicy{77}, 4);
  const auto b = bc::sample_paths(5, grid, RngPolicy{77}, 4);
  EXPECT_EQ(a.values, b.values);
  const auto c = bc::sample_paths(5, grid, RngPolicy{78}, 4);
  EXPECT_NE(a.values, c.values);
}

TEST(SamplePaths, TerminalVarianceInChiSquareBand) {
  const auto grid = TimeGrid::uniform(1.0, 0.125);
  const RngPolicy policy{2024};
  const int n = 10000;
  for (std::size_t k : {1u, 3u}) {
    double sum2 = 0.0, sum = 0.0;
    for (int r = 0; r < n; ++r) {
      const double v = bc::sample_paths(3, grid, policy, r).at(k, grid.size() - 1);
      sum += v;
      sum2 += v * v;
    }
    const double var = (sum2 - sum * sum / n) / (n - 1);
    EXPECT_GE(var, 0.94);
    EXPECT_LE(var, 1.06);
  }
}

TEST(SamplePaths, IncrementsUncorrelatedAcrossCoefficients) {
  const auto grid = TimeGrid::from_times({0.0, 0.3, 1.0});
  const RngPolicy policy{99};
  const int n = 10000;
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int r = 0; r < n; ++r) {
    const auto b = bc::sample_paths(2, grid, policy, r);
    const double x = b.at(1, 2) - b.at(1, 1);
    const double y = b.at(2, 2) - b.at(2, 1);
    sxy += x * y; sx += x; sy += y; sxx += x * x; syy += y * y;
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double corr = cov / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
  EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(n));
}

TEST(SamplePaths, IncrementVarianceMatchesStep) {
  const auto grid = TimeGrid::from_times({0.0, 0.25, 1.0});
  const RngPolicy policy{5};
  const int n = 10000;
  double s1 = 0, s2 = 0;
  for (int r = 0; r < n; ++r) {
    const auto b = bc::sample_paths(1, grid, policy, r);
    s1 += b.at(1, 1) * b.at(1, 1);
    s2 += std::pow(b.at(1, 2) - b.at(1, 1), 2);
  }
  EXPECT_NEAR(s1 / n / 0.25, 1.0, 0.06);
  EXPECT_NEAR(s2 / n / 0.75, 1.0, 0.06);
}

TEST(SamplePaths, SchedulingDoesNotChangePaths) {
  const auto grid = TimeGrid::uniform(1.0, 0.05);
  const RngPolicy policy{1234};
  const int reps = 32;
  std::vector<std::uint64_t> serial(reps), reversed(reps), threaded(reps);
  for (int r = 0; r < reps; ++r) serial[r] = fnv1a(bc::sample_paths(4, grid, policy, r).values);
  for (int r = reps - 1; r >= 0; --r) reversed[r] = fnv1a(bc::sample_paths(4, grid, policy, r).values);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      for (int r = w; r < reps; r += 4) threaded[r] = fnv1a(bc::sample_paths(4, grid, policy, r).values);
    });
  }
  for (auto& t : workers) t.join();
  EXPECT_EQ(serial, reversed);
  EXPECT_EQ(serial, threaded);
}

TEST(PathStream, SubRangeMatchesBundleRows) {
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  const RngPolicy policy{8};
  const auto bundle = bc::sample_paths(6, grid, policy, 2);
  bc::PathStream stream({3, 5}, grid, policy, 2);
  while (!stream.at_end()) {
    stream.step();
    EXPECT_EQ(stream.values()[0], bundle.at(3, stream.index()));
    EXPECT_EQ(stream.values()[1], bundle.at(4, stream.index()));
  }
  EXPECT_THROW(stream.step(), bc::DomainError);
}

TEST(PathBundle, BinaryDumpRoundTrip) {
  const auto grid = TimeGrid::uniform(1.0, 0.25);
  const auto bundle = bc::sample_paths(3, grid, RngPolicy{0xABCDEF0123ull}, 17);
  std::stringstream buf;
  bc::write_bundle(buf, bundle);
  EXPECT_EQ(buf.str().size(), 32u + 3 * 5 * 8);
  // Header is little-endian.
  EXPECT_EQ(static_cast<unsigned char>(buf.str()[0]), 3);
  const auto back = bc::read_bundle(buf);
  EXPECT_EQ(back.coefficient_count, 3u);
  EXPECT_EQ(back.grid_size, 5u);
  EXPECT_EQ(back.replicate, 17u);
  EXPECT_EQ(back.policy.master_seed, 0xABCDEF0123ull);
  EXPECT_EQ(back.values, bundle.values);
}

TEST(FirstPassage, Errors) {
  EXPECT_THROW(bc::sample_first_passage(0.0, RngPolicy{1}, 0), bc::DomainError);
  EXPECT_THROW(bc::sample_first_passage(-1.0, RngPolicy{1}, 0), bc::DomainError);
}

TEST(FirstPassage, SmallLevelGivesSmallTimes) {
  const RngPolicy policy{6};
  std::vector<double> draws;
  for (int r = 0; r < 1000; ++r) draws.push_back(bc::sample_first_passage(1e-4, policy, r));
  std::sort(draws.begin(), draws.end());
  EXPECT_LT(draws[500], 1e-6);
}

TEST(FirstPassage, EmpiricalCdfAtOne) {
  const RngPolicy policy{31};
  const int n = 10000;
  int hits = 0;
  for (int r = 0; r < n; ++r) hits += bc::sample_first_passage(1.0, policy, r) <= 1.0;
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.317310507862914, 0.015);
}

TEST(FirstPassage, KolmogorovSmirnovLevelTwo) {
  const RngPolicy policy{32};
  std::vector<double> draws;
  for (int r = 0; r < 10000; ++r) draws.push_back(bc::sample_first_passage(2.0, policy, r));
  EXPECT_LE(ks_distance(draws, 2.0), 0.02);
}

TEST(FirstPassage, ScalingLaw) {
  const RngPolicy policy{33};
  std::vector<double> draws;
  for (int r = 0; r < 10000; ++r) draws.push_back(bc::sample_first_passage(3.0, policy, r) / 4.0);
  EXPECT_LE(ks_distance(draws, 1.5), 1.63 / 100.0);
}
