#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bc/coupling.hpp"
#include "bc/errors.hpp"

using bc::AmbientNorm;
using bc::HVector;
using bc::ModelSpec;
using bc::RngPolicy;
using bc::TimeGrid;

namespace {

HVector random_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> dist;
  std::vector<double> c(n);
  for (auto& v : c) v = dist(gen);
  return HVector(std::move(c));
}

ModelSpec geometric_model(double rho, std::size_t K) {
  std::vector<double> s(K);
  for (std::size_t k = 1; k <= K; ++k) s[k - 1] = std::pow(rho, static_cast<double>(k));
  return ModelSpec::diagonal(std::move(s), AmbientNorm::L2);
}

double levy_cdf(double a, double t) { return std::erfc(a / std::sqrt(2.0 * t)); }

}  // namespace

TEST(Reflect, Examples) {
  const HVector x({1.5, -2.0, 0.5});
  const HVector minus_x = bc::reflect(x, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(minus_x[i], -x[i], 1e-12);
  const HVector y({2.0, 1.5, 0.0});  // <x, y> = 0
  EXPECT_EQ(bc::reflect(x, y), y);
  EXPECT_EQ(bc::reflect(HVector({1, 0}), HVector({3, 4})), HVector({-3, 4}));
  EXPECT_THROW(bc::reflect(HVector({0, 0}), HVector({1, 1})), bc::DomainError);
  EXPECT_THROW(bc::reflect(HVector({1}), HVector({1, 1})), bc::DimensionError);
}

TEST(Reflect, IsometricInvolution) {
  std::mt19937_64 gen(64);
  for (int trial = 0; trial < 1000; ++trial) {
    const HVector x = random_vector(gen, 64);
    const HVector y = random_vector(gen, 64);
    const HVector ry = bc::reflect(x, y);
    EXPECT_NEAR(bc::h_norm(ry), bc::h_norm(y), 1e-12 * bc::h_norm(y));
    const HVector back = bc::reflect(x, ry);
    for (std::size_t i = 0; i < 64; ++i) ASSERT_NEAR(back[i], y[i], 1e-12);
  }
}

TEST(BridgeCrossing, Limits) {
  EXPECT_EQ(bc::bridge_crossing_probability(0.0, 1.0, 1.0, 1.0), 1.0);
  EXPECT_NEAR(bc::bridge_crossing_probability(1.0, 1.0, 1.0, 2.0), std::exp(-1.0), 1e-15);
  EXPECT_LT(bc::bridge_crossing_probability(5.0, 5.0, 1.0, 0.001), 1e-300);
}

TEST(BridgeCrossing, MatchesFineSimulation) {
  // Bridge from 0 to 0 over [0,1] touching level 0.5: exp(-2 * 0.25) = 0.6065.
  std::mt19937_64 gen(10);
  std::normal_distribution<double> n01;
  const int steps = 2000, n = 4000;
  int hits = 0;
  for (int r = 0; r < n; ++r) {
    std::vector<double> w(steps + 1, 0.0);
    for (int i = 1; i <= steps; ++i) w[i] = w[i - 1] + n01(gen) / std::sqrt(double(steps));
    double mx = 0.0;
    for (int i = 0; i <= steps; ++i) mx = std::max(mx, w[i] - (double(i) / steps) * w[steps]);
    hits += mx >= 0.5;
  }
  const double p = bc::bridge_crossing_probability(0.5, 0.5, 1.0, 1.0);
  // Discrete monitoring biases low by O(sqrt(dt)); allow that plus 3 sigma.
  EXPECT_NEAR(static_cast<double>(hits) / n, p, 3 * std::sqrt(p * (1 - p) / n) + 0.02);
}

TEST(DetectCouplingTime, ZeroPathNeverCouples) {
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  bc::PathBundle bundle;
  bundle.coefficient_count = 2;
  bundle.grid_size = grid.size();
  bundle.values.assign(2 * grid.size(), 0.0);
  EXPECT_FALSE(bc::detect_coupling_time(HVector({1, 1}), bundle, grid).has_value());
  EXPECT_FALSE(bc::detect_coupling_time(HVector({1, 1}), bundle, grid, true).has_value());
  EXPECT_THROW(bc::detect_coupling_time(HVector({0, 0}), bundle, grid), bc::DomainError);
}

TEST(DetectCouplingTime, ReducesToScalarCrossing) {
  const auto grid = TimeGrid::uniform(5.0, 0.01);
  const RngPolicy policy{17};
  const double a = 1.2;
  for (int r = 0; r < 50; ++r) {
    const auto bundle = bc::sample_paths(3, grid, policy, r);
    std::optional<double> expected;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (bundle.at(1, i) >= a / 2) {
        expected = grid[i];
        break;
      }
    }
    EXPECT_EQ(bc::detect_coupling_time(HVector({a, 0, 0}), bundle, grid), expected);
  }
}

TEST(DetectCouplingTime, AgreesWithStreamingRunner) {
  const auto grid = TimeGrid::uniform(4.0, 0.01);
  const RngPolicy policy{23};
  const auto model = ModelSpec::diagonal({1.0, 0.5, 0.25}, AmbientNorm::Sup);
  const HVector x({0.4, -0.7, 0.2});
  for (int r = 0; r < 100; ++r) {
    const auto bundle = bc::sample_paths(3, grid, policy, r);
    for (bool bridge : {false, true}) {
      bc::RunOptions opt;
      opt.bridge = bridge;
      opt.record_times = {0.0};
      const auto result = bc::run_reflection_coupling(model, x, grid, policy, r, opt);
      EXPECT_EQ(bc::detect_coupling_time(x, bundle, grid, bridge), result.coupling_time());
    }
  }
}

TEST(DetectCouplingTime, BridgeDetectionMatchesLevyLaw) {
  // x = e_1 with |x| = 1: coupling when beta_1 first reaches 1/2.
  const auto grid = TimeGrid::uniform(100.0, 1e-3);
  const auto model = ModelSpec::diagonal({1.0}, AmbientNorm::L2);
  const RngPolicy policy{4242};
  bc::RunOptions opt;
  opt.record_times = {0.0};
  const int n = 5000;
  std::vector<std::pair<double, bool>> draws;
  for (int r = 0; r < n; ++r) {
    const auto t = bc::run_reflection_coupling(model, HVector({1.0}), grid, policy, r, opt)
                       .coupling_time();
    draws.emplace_back(t.value_or(grid.horizon()), !t.has_value());
  }
  std::sort(draws.begin(), draws.end());
  double d = 0.0;
  int below = 0;
  for (const auto& [t, censored] : draws) {
    if (censored) continue;
    const double f = levy_cdf(0.5, t);
    d = std::max(d, std::abs(f - double(below) / n));
    ++below;
    d = std::max(d, std::abs(double(below) / n - f));
  }
  EXPECT_LE(d, 0.03);
}

TEST(ReflectionCoupling, TrajectoryProperties) {
  const auto model = ModelSpec::classical(3, 4);
  const auto grid = TimeGrid::uniform(3.0, 0.01);
  std::mt19937_64 gen(5);
  bc::RunOptions opt;
  opt.keep_paths = true;
  int coupled_runs = 0;
  for (int r = 0; r < 40; ++r) {
    const HVector x = 0.5 * random_vector(gen, 8);
    const double h2 = bc::h_inner(x, x);
    const auto res = bc::run_reflection_coupling(model, x, grid, RngPolicy{91}, r, opt);
    ASSERT_EQ(res.times.size(), grid.size());
    EXPECT_EQ(res.distance[0], bc::w_norm(model, x));
    const auto T = res.coupling_time();
    coupled_runs += T.has_value();
    for (std::size_t j = 0; j < res.times.size(); ++j) {
      const HVector& B = res.base_path[j];
      const HVector& Bt = res.coupled_path[j];
      const HVector delta = Bt - B;
      if (T && res.times[j] >= *T) {
        EXPECT_EQ(res.distance[j], 0.0);
        EXPECT_EQ(B, Bt);
        EXPECT_EQ(res.factors[0][j], 0.0);
        continue;
      }
      const double s = 1.0 - 2.0 * bc::h_inner(x, B) / h2;
      EXPECT_NEAR(bc::h_norm(delta), std::abs(s) * bc::h_norm(x), 1e-10);
      EXPECT_NEAR(bc::h_inner(x, Bt - x), -bc::h_inner(x, B), 1e-12 * (1 + std::abs(bc::h_inner(x, B))));
      EXPECT_NEAR(res.distance[j], bc::w_norm(model, delta), 1e-10);
      EXPECT_NEAR(res.factors[0][j], s, 1e-12);
    }
  }
  EXPECT_GT(coupled_runs, 0);
}

TEST(ReflectionCoupling, Errors) {
  const auto model = ModelSpec::diagonal({1.0, 1.0}, AmbientNorm::L2);
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  EXPECT_THROW(bc::run_reflection_coupling(model, HVector({0, 0}), grid, RngPolicy{}, 0),
               bc::DomainError);
  EXPECT_THROW(bc::run_reflection_coupling(model, HVector({1}), grid, RngPolicy{}, 0),
               bc::DimensionError);
}

TEST(PlanBlocks, SingleCoefficient) {
  const auto model = geometric_model(0.5, 6);
  const auto plan = bc::plan_blocks(model, HVector::unit(6, 4, 3.0));
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan.cuts, (std::vector<std::size_t>{1, 7}));
  EXPECT_EQ(plan.tails[0], 0.0);
  EXPECT_TRUE(plan.increment_bound_holds);
}

TEST(PlanBlocks, GeometricFamilyMatchesSeriesOracle) {
  const std::size_t K = 20;
  const auto model = geometric_model(0.5, K);
  const auto x = HVector(std::vector<double>(K, 1.0));
  const auto plan = bc::plan_blocks(model, x);

  // Oracle: tail after keeping coefficients < r is sqrt(sum_{k=r}^{K} 4^-k);
  // choose the smallest r past the previous cut meeting 2^{-n-1}.
  auto tail = [&](std::size_t r) {
    long double s = 0;
    for (std::size_t k = r; k <= K; ++k) s += std::pow(4.0L, -static_cast<long double>(k));
    return std::sqrt(s);
  };
  std::vector<std::size_t> cuts{1};
  for (std::size_t n = 1; cuts.back() <= K; ++n) {
    std::size_t r = cuts.back() + 1;
    while (r <= K && tail(r) > std::pow(2.0L, -static_cast<long double>(n) - 1)) ++r;
    if (r <= K + 1 && tail(r) == 0) r = K + 1;
    cuts.push_back(r);
  }
  EXPECT_EQ(plan.cuts, cuts);
  ASSERT_EQ(plan.size(), 19u);
  EXPECT_EQ(plan.range(1), (bc::CoeffRange{1, 3}));
  for (std::size_t n = 1; n <= plan.size(); ++n) {
    // "tail after r" with r = r_n - 1 satisfies r >= n + 1 - log2(sqrt 3).
    EXPECT_GE(static_cast<double>(plan.cuts[n] - 1), n + 1 - std::log2(std::sqrt(3.0)));
    if (n < plan.size()) {
      EXPECT_LE(plan.tails[n - 1], std::exp2(-double(n) - 1));
      EXPECT_NEAR(plan.tails[n - 1], static_cast<double>(tail(plan.cuts[n])), 1e-15);
    }
  }
  EXPECT_EQ(plan.tails.back(), 0.0);
  EXPECT_TRUE(plan.increment_bound_holds);
  for (std::size_t n = 1; n < plan.size(); ++n) {
    EXPECT_LT(plan.block_w_norms[n], std::exp2(-double(n) + 1));
  }
}

TEST(PlanBlocks, ClassicalPlansMeetSchedule) {
  std::mt19937_64 gen(19);
  const auto model = ModelSpec::classical(5, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const HVector x = random_vector(gen, 32);
    const auto plan = bc::plan_blocks(model, x);
    EXPECT_EQ(plan.cuts.front(), 1u);
    EXPECT_EQ(plan.cuts.back(), 33u);
    HVector sum = HVector::zeros(32);
    for (std::size_t n = 1; n <= plan.size(); ++n) {
      EXPECT_FALSE(plan.blocks[n - 1].is_zero());
      for (std::size_t m = 1; m < n; ++m) {
        EXPECT_EQ(bc::h_inner(plan.blocks[n - 1], plan.blocks[m - 1]), 0.0);
      }
      sum = sum + plan.blocks[n - 1];
      EXPECT_NEAR(plan.tails[n - 1], bc::w_norm(model, x - sum), 1e-12);
      if (n < plan.size()) EXPECT_LE(plan.tails[n - 1], std::exp2(-double(n) - 1));
    }
    EXPECT_EQ(sum, x);
    EXPECT_TRUE(plan.increment_bound_holds);
  }
}

TEST(PlanBlocks, Errors) {
  const auto model = geometric_model(0.5, 3);
  EXPECT_THROW(bc::plan_blocks(model, HVector::zeros(3)), bc::DomainError);
  EXPECT_THROW(bc::plan_blocks(model, HVector::zeros(2)), bc::DimensionError);
}

TEST(BlockCoupling, SingleBlockPlanEqualsReflectionCoupling) {
  const auto model = geometric_model(0.7, 5);
  const HVector x({0.3, 1.0, -0.4, 0.2, 0.9});
  const auto grid = TimeGrid::uniform(10.0, 0.01);
  for (int r = 0; r < 20; ++r) {
    const auto a = bc::run_reflection_coupling(model, x, grid, RngPolicy{3}, r);
    const auto b = bc::run_block_coupling(model, x, bc::single_block_plan(model, x), grid,
                                          RngPolicy{3}, r);
    EXPECT_EQ(a.distance, b.distance);
    EXPECT_EQ(a.uncoupled, b.uncoupled);
    EXPECT_EQ(a.coupling_time(), b.coupling_time());
  }
}

TEST(BlockCoupling, DistanceZeroAfterAllBlocksAndSpanInvariant) {
  const std::size_t K = 8;
  const auto model = geometric_model(0.5, K);
  const HVector x(std::vector<double>(K, 1.0));
  const auto plan = bc::plan_blocks(model, x);
  const auto grid = TimeGrid::uniform(20.0, 0.01);
  bc::RunOptions opt;
  opt.keep_paths = true;
  for (int r = 0; r < 10; ++r) {
    const auto res = bc::run_block_coupling(model, x, plan, grid, RngPolicy{12}, r, opt);
    for (std::size_t j = 0; j < res.times.size(); ++j) {
      const HVector delta = res.coupled_path[j] - res.base_path[j];
      // Delta is a combination of the live blocks only.
      for (std::size_t n = 1; n <= plan.size(); ++n) {
        const auto& blk = res.blocks[n - 1];
        const bool live = !blk.coupling_time || res.times[j] < *blk.coupling_time;
        for (std::size_t k = blk.range.lo; k < blk.range.hi; ++k) {
          if (!live) {
            EXPECT_EQ(delta[k - 1], 0.0);
          } else {
            EXPECT_NEAR(delta[k - 1], res.factors[n - 1][j] * x[k - 1], 1e-12);
          }
        }
      }
      if (res.uncoupled[j] == 0) EXPECT_EQ(res.distance[j], 0.0);
    }
    if (const auto T = res.coupling_time()) {
      EXPECT_EQ(res.distance[grid.index_of(*T)], 0.0);
    }
  }
}

TEST(BlockCoupling, BlockCouplingTimesIndependent) {
  const auto model = ModelSpec::diagonal({1.0, 1.0, 1.0}, AmbientNorm::L2);
  const HVector x({1.0, 0.8, 0.6});
  bc::BlockPlan plan = bc::single_block_plan(model, x);
  plan.cuts = {1, 2, 4};
  plan.blocks = {bc::project_block(x, {1, 2}), bc::project_block(x, {2, 4})};
  const auto grid = TimeGrid::uniform(10.0, 0.01);
  bc::RunOptions opt;
  opt.record_times = {0.0};
  const int n = 3000;
  std::vector<double> t1, t2;
  for (int r = 0; r < n; ++r) {
    const auto res = bc::run_block_coupling(model, x, plan, grid, RngPolicy{55}, r, opt);
    t1.push_back(res.blocks[0].coupling_time.value_or(10.0));
    t2.push_back(res.blocks[1].coupling_time.value_or(10.0));
  }
  double m1 = 0, m2 = 0;
  for (int i = 0; i < n; ++i) { m1 += t1[i] / n; m2 += t2[i] / n; }
  double c = 0, v1 = 0, v2 = 0;
  for (int i = 0; i < n; ++i) {
    c += (t1[i] - m1) * (t2[i] - m2);
    v1 += (t1[i] - m1) * (t1[i] - m1);
    v2 += (t2[i] - m2) * (t2[i] - m2);
  }
  EXPECT_LT(std::abs(c / std::sqrt(v1 * v2)), 3.0 / std::sqrt(double(n)));
}

TEST(BlockCoupling, PlanMismatchRejected) {
  const auto model = geometric_model(0.5, 4);
  const HVector x({1, 1, 1, 1});
  auto plan = bc::plan_blocks(model, x);
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  EXPECT_THROW(bc::run_block_coupling(model, HVector({1, 2, 1, 1}), plan, grid, RngPolicy{}, 0),
               bc::DimensionError);
  plan.cuts.back() = 4;
  EXPECT_THROW(bc::run_block_coupling(model, x, plan, grid, RngPolicy{}, 0), bc::DimensionError);
}

TEST(BlockCoupling, SupDeviationFollowsGamblersRuin) {
  const auto model = ModelSpec::diagonal({1.0}, AmbientNorm::L2);
  const HVector x({1.0});
  const auto grid = TimeGrid::uniform(200.0, 2e-3);
  bc::RunOptions opt;
  opt.track_sup = true;
  opt.sup_stop = 10.0;
  opt.record_times = {0.0};
  const int n = 10000;
  std::vector<double> sups;
  for (int r = 0; r < n; ++r) {
    sups.push_back(bc::run_reflection_coupling(model, x, grid, RngPolicy{808}, r, opt)
                       .blocks[0].factor_sup);
  }
  for (double lambda : {2.0, 5.0, 10.0}) {
    const double p = 1.0 / lambda;
    const double hits = static_cast<double>(
        std::count_if(sups.begin(), sups.end(), [&](double s) { return s >= lambda; }));
    EXPECT_NEAR(hits / n, p, 3 * std::sqrt(p * (1 - p) / n)) << lambda;
  }
}
