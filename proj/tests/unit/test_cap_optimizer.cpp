#include <cmath>

#include <gtest/gtest.h>

#include "cran/cap_optimizer.hpp"
#include "instances.hpp"

namespace cran {
namespace {

SystemConfig scalar_config(double fronthaul = 2.0, double power = 10.0) {
  return SystemConfig::uniform(1, 1, 1, 1, fronthaul, power, 1);
}

ChannelRealization unit_channel() { return ChannelRealization({1}, {1}, CMatrix::Constant(1, 1, 1.0)); }

ChannelSource constant_source(ChannelRealization h) {
  return [h](Rng&) { return h; };
}

void expect_feasible(const SystemConfig& c, const IterationRecord& r, double tol = 1e-6) {
  for (int i = 0; i < c.num_rus; ++i) {
    EXPECT_LE(r.fronthaul_load[i], c.fronthaul_capacity[i] + tol) << "RU " << i << " inner " << r.inner;
    EXPECT_LE(r.power[i], c.power_budget[i] + tol) << "RU " << i << " inner " << r.inner;
  }
}

TEST(InitCap, ScalarOracle) {
  const auto [v, q] = init_cap(scalar_config());
  const double v0 = v.blocks[0](0, 0).real();
  const double s0 = q.variances[0];
  EXPECT_NEAR(v0 + s0, 9.0, 1e-8);
  EXPECT_NEAR(std::log2((v0 + s0) / s0), 1.8, 1e-8);
}

TEST(InitCap, TargetsAndFeasibility) {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const auto c = testing::random_config(rng);
    const auto [v, q] = init_cap(c);
    const auto loads = cap_fronthaul_loads(c, v, q);
    const auto powers = cap_powers(c, v, q);
    for (int i = 0; i < c.num_rus; ++i) {
      EXPECT_NEAR(powers[i], 0.9 * c.power_budget[i], 1e-8 * c.power_budget[i]);
      EXPECT_NEAR(loads[i], 0.9 * c.fronthaul_capacity[i], 1e-8);
    }
    EXPECT_NO_THROW(v.validate());
  }
}

TEST(InitCap, PowerBelowNoiseFloorIsAnError) {
  auto c = scalar_config(2.0, 1e-11);
  EXPECT_THROW(init_cap(c), std::invalid_argument);
}

TEST(InitCap, ZeroCapacityRuStaysSilent) {
  auto c = SystemConfig::uniform(2, 1, 1, 1, 2.0, 10.0, 1);
  c.fronthaul_capacity[1] = 0.0;
  const auto [v, q] = init_cap(c);
  const auto powers = cap_powers(c, v, q);
  EXPECT_LT(powers[1], 1e-8);
  EXPECT_NEAR(cap_fronthaul_loads(c, v, q)[1], 0.0, 1e-9);
}

TEST(CapPerfect, ScalarOracle) {
  const auto s = optimize_cap_perfect(scalar_config(), unit_channel());
  EXPECT_NEAR(s.quantization.variances[0], 2.5, 1e-3);
  EXPECT_NEAR(s.covariances.blocks[0](0, 0).real(), 7.5, 1e-3);
  EXPECT_NEAR(s.trace.back().objective, std::log2(11.0) - std::log2(3.5), 1e-3);
}

TEST(CapStochastic, DegenerateStatisticsReachScalarOracle) {
  SsumOptions opt;
  opt.outer_iterations = 20;
  const auto s = optimize_cap_stochastic(scalar_config(), constant_source(unit_channel()), opt);
  EXPECT_NEAR(s.quantization.variances[0], 2.5, 1e-3);
  EXPECT_NEAR(s.covariances.blocks[0](0, 0).real(), 7.5, 1e-3);
  EXPECT_EQ(s.sample_count, 20);
}

TEST(CapPerfect, ZeroChannelKeepsInitialization) {
  const auto c = SystemConfig::uniform(2, 2, 1, 1, 2.0, 10.0, 1);
  const ChannelRealization h(c.rx_antennas, c.tx_antennas);
  const auto s = optimize_cap_perfect(c, h);
  EXPECT_NEAR(s.trace.back().objective, 0.0, 1e-12);
  const auto [v0, q0] = init_cap(c);
  for (int i = 0; i < 2; ++i) EXPECT_LE(cap_fronthaul_loads(c, s.covariances, s.quantization)[i], 2.0 + 1e-6);
  EXPECT_EQ(s.covariances.num_mss(), v0.num_mss());
}

TEST(CapPerfect, ZeroCapacityGivesZeroRate) {
  Rng rng(2);
  const auto c = SystemConfig::uniform(2, 2, 1, 1, 0.0, 10.0, 1);
  const auto h = testing::random_channel(c, rng);
  const auto s = optimize_cap_perfect(c, h);
  EXPECT_NEAR(weighted_sum_rate(c, h, s.covariances, s.quantization), 0.0, 1e-6);
}

TEST(CapPerfect, MonotoneAndFeasibleTraces) {
  Rng rng(3);
  for (int rep = 0; rep < 6; ++rep) {
    const auto c = testing::random_config(rng, 3);
    const auto h = testing::random_channel(c, rng, 2.0);
    const auto s = optimize_cap_perfect(c, h);
    ASSERT_GE(s.trace.size(), 2u);
    for (std::size_t k = 1; k < s.trace.size(); ++k)
      EXPECT_GE(s.trace[k].objective, s.trace[k - 1].objective - 1e-6) << "rep " << rep << " it " << k;
    for (const auto& r : s.trace) expect_feasible(c, r);
  }
}

TEST(CapStochastic, ZeroWeightsGiveZeroObjective) {
  auto net = testing::desk_network(4, 2.0, 10.0, 20, 2, 2, 1, 1);
  net.config.rate_weights = {0.0, 0.0};
  SsumOptions opt;
  opt.outer_iterations = 3;
  const auto s = optimize_cap_stochastic(net.config, net.stats, opt);
  for (const auto& r : s.trace) EXPECT_NEAR(r.objective, 0.0, 1e-12);
}

TEST(CapStochastic, FeasibleReproducibleAndInnerMonotone) {
  const auto net = testing::desk_network(5, 3.0, 10.0, 20, 2, 2, 1, 1);
  SsumOptions opt;
  opt.outer_iterations = 6;
  opt.seed = 99;
  const auto a = optimize_cap_stochastic(net.config, net.stats, opt);
  const auto b = optimize_cap_stochastic(net.config, net.stats, opt);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].surrogate_objective, b.trace[k].surrogate_objective);
    expect_feasible(net.config, a.trace[k]);
    if (k > 0 && a.trace[k].outer == a.trace[k - 1].outer) {
      EXPECT_GE(a.trace[k].surrogate_objective, a.trace[k - 1].surrogate_objective - 1e-8);
    }
  }
  for (int n = 1; n <= 6; ++n) {
    int inner = 0;
    for (const auto& r : a.trace) inner += r.outer == n;
    EXPECT_GE(inner, 2);
  }
}

TEST(CapStochastic, SymmetricInstanceGivesSymmetricDesign) {
  // swapping both MSs and RUs maps the problem onto itself
  const auto c = SystemConfig::uniform(2, 2, 1, 1, 2.0, 10.0, 1);
  const ChannelSource source = [](Rng& rng) {
    const Complex a = complex_normal(rng), b = 0.5 * complex_normal(rng);
    CMatrix h(2, 2);
    h << a, b, b, a;
    return ChannelRealization({1, 1}, {1, 1}, h);
  };
  SsumOptions opt;
  opt.outer_iterations = 10;
  const auto s = optimize_cap_stochastic(c, source, opt);
  const CMatrix& v1 = s.covariances.blocks[0];
  const CMatrix& v2 = s.covariances.blocks[1];
  EXPECT_NEAR(v1(0, 0).real(), v2(1, 1).real(), 1e-2);
  EXPECT_NEAR(v1(1, 1).real(), v2(0, 0).real(), 1e-2);
  EXPECT_NEAR(s.quantization.variances[0], s.quantization.variances[1], 1e-2);
}

TEST(SsumOptions, Validation) {
  SsumOptions o;
  o.inner_max = 0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = {};
  o.inner_min = 30;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = {};
  o.inner_tolerance = 0.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace cran
