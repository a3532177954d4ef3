#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "cran/cbp_optimizer.hpp"
#include "instances.hpp"

namespace cran {
namespace {

ChannelRealization unit_channel() { return ChannelRealization({1}, {1}, CMatrix::Constant(1, 1, 1.0)); }

ChannelSource constant_source(ChannelRealization h) {
  return [h](Rng&) { return h; };
}

double objective(const SystemConfig& c, const CbpSolution& s) {
  double acc = 0.0;
  for (int j = 0; j < c.num_mss; ++j) acc += c.rate_weights[j] * s.rates[j];
  return acc;
}

TEST(Clusters, SortByNormOracle) {
  const auto c = assign_clusters({{3.0, 1.0, 2.0}, {1.0, 2.0, 3.0}}, 2);
  EXPECT_EQ(c.served_mss[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(c.served_mss[1], (std::vector<int>{1, 2}));
  EXPECT_EQ(c.serving_rus[2], (std::vector<int>{0, 1}));
  EXPECT_EQ(c.serving_rus[0], (std::vector<int>{0}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Clusters, TiesPickLowestIndices) {
  const auto c = assign_clusters({{1.0, 1.0, 1.0, 1.0}}, 2);
  EXPECT_EQ(c.served_mss[0], (std::vector<int>{0, 1}));
}

TEST(Clusters, FullClusterServesEveryone) {
  Rng rng(1);
  const auto cfg = SystemConfig::uniform(3, 4, 2, 1, 1.0, 1.0, 1);
  const auto h = testing::random_channel(cfg, rng);
  for (int nc : {4, 7}) {
    const auto c = assign_clusters_instantaneous(h, nc);
    for (const auto& m : c.served_mss) EXPECT_EQ(m, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(Clusters, InstantaneousUsesBlockNorms) {
  CMatrix m(3, 2);
  m << 3.0, 1.0, 1.0, 2.0, 2.0, 3.0;  // rows are MSs, columns RUs
  const ChannelRealization h({1, 1, 1}, {1, 1}, m);
  const auto c = assign_clusters_instantaneous(h, 2);
  EXPECT_EQ(c.served_mss[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(c.served_mss[1], (std::vector<int>{1, 2}));
}

TEST(Clusters, PermutationEquivariant) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const int nr = 3, nm = 5;
    std::vector<std::vector<double>> s(nr, std::vector<double>(nm));
    for (auto& row : s)
      for (auto& x : row) x = u(rng);
    std::vector<int> perm{3, 0, 4, 1, 2};  // new label of MS j is perm[j]
    std::vector<std::vector<double>> t(nr, std::vector<double>(nm));
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nm; ++j) t[i][perm[j]] = s[i][j];
    const auto a = assign_clusters(s, 2);
    const auto b = assign_clusters(t, 2);
    for (int j = 0; j < nm; ++j) EXPECT_EQ(a.serving_rus[j], b.serving_rus[perm[j]]);
  }
}

TEST(Clusters, StochasticStatistic) {
  ChannelStatistics st;
  st.num_rus = 1;
  st.num_mss = 2;
  st.links.resize(2);
  st.link(0, 0).tx_correlation = CMatrix::Constant(1, 1, 0.1);
  st.link(1, 0).tx_correlation = CMatrix::Constant(1, 1, 0.9);
  for (auto& l : st.links) l.rx_correlation = CMatrix::Identity(1, 1);
  EXPECT_EQ(assign_clusters_stochastic(st, 1).served_mss[0], (std::vector<int>{1}));
  st.link(1, 0).tx_correlation = CMatrix::Constant(1, 1, 0.1);
  EXPECT_EQ(assign_clusters_stochastic(st, 1).served_mss[0], (std::vector<int>{0}));
}

TEST(Clusters, StochasticStatisticMatchesMonteCarlo) {
  const auto net = testing::desk_network(3, 1.0, 10.0, 20, 2, 2, 3, 2);
  const ChannelSampler sampler(net.stats);
  Rng rng(4);
  const int n = 100000;
  std::vector<double> acc(4, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto h = sampler(rng);
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) acc[j * 2 + i] += h.block(j, i).squaredNorm();
  }
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const double expected = 2.0 * net.stats.link(j, i).tx_correlation.trace().real();
      EXPECT_NEAR(acc[j * 2 + i] / n, expected, 0.02 * expected);
    }
}

TEST(Clusters, ValidationCatchesInconsistency) {
  auto c = assign_clusters({{1.0, 2.0}}, 1);
  c.serving_rus[0].push_back(0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(assign_clusters({{1.0}}, 0), std::invalid_argument);
}

TEST(Clusters, UnservedDetection) {
  auto cfg = SystemConfig::uniform(1, 3, 3, 1, 1.0, 1.0, 1);
  const auto c = assign_clusters({{1.0, 3.0, 2.0}}, 1);
  EXPECT_EQ(unserved_mss(c, cfg), (std::vector<int>{0, 2}));
  cfg.rate_weights[0] = 0.0;
  EXPECT_EQ(unserved_mss(c, cfg), (std::vector<int>{2}));
}

TEST(CbpStochastic, ZeroCapacityGivesZeroRates) {
  const auto net = testing::desk_network(5, 0.0, 10.0, 20, 2, 2, 1, 1);
  SsumOptions opt;
  opt.outer_iterations = 3;
  const auto s = optimize_cbp_stochastic(net.config, net.stats, assign_clusters_stochastic(net.stats, 1), opt);
  for (double r : s.rates) EXPECT_EQ(r, 0.0);
  for (double o : s.objective_trace) EXPECT_EQ(o, 0.0);
}

TEST(CbpStochastic, ScalarFronthaulCapBinds) {
  const auto cfg = SystemConfig::uniform(1, 1, 1, 1, 2.0, 10.0, 20);
  SsumOptions opt;
  opt.outer_iterations = 1;
  const auto clusters = assign_clusters({{1.0}}, 1);
  const auto s = optimize_cbp_stochastic(cfg, constant_source(unit_channel()), clusters, opt);
  EXPECT_NEAR(s.rates[0], 2.0, 1e-6);
  EXPECT_LE(s.rates[0], 2.0 + 1e-6);
  // the precoder supports the committed rate
  EXPECT_GE(cbp_user_rate(cfg, unit_channel(), s.covariances, s.quantization, 0), 2.0 - 1e-6);
}

TEST(CbpStochastic, IndependentOfCoherence) {
  auto net = testing::desk_network(6, 2.0, 10.0, 1, 2, 2, 1, 1);
  SsumOptions opt;
  opt.outer_iterations = 4;
  opt.seed = 3;
  const auto clusters = assign_clusters_stochastic(net.stats, 1);
  const auto a = optimize_cbp_stochastic(net.config, net.stats, clusters, opt);
  net.config.coherence_length = 50;
  const auto b = optimize_cbp_stochastic(net.config, net.stats, clusters, opt);
  EXPECT_EQ(a.rates, b.rates);
}

TEST(CbpStochastic, FeasibleIteratesAndSparsity) {
  const auto net = testing::desk_network(7, 1.5, 10.0, 20, 3, 3, 2, 1);
  SsumOptions opt;
  opt.outer_iterations = 6;
  const auto clusters = assign_clusters_stochastic(net.stats, 2);
  const auto s = optimize_cbp_stochastic(net.config, net.stats, clusters, opt);
  for (const auto& r : s.trace)
    for (int i = 0; i < 3; ++i) {
      EXPECT_LE(r.fronthaul_load[i], 1.5 + 1e-6);
      EXPECT_LE(r.power[i], net.config.power_budget[i] + 1e-6);
    }
  for (int j = 0; j < 3; ++j) {
    const auto allowed = antennas_of(net.config, clusters.serving_rus[j]);
    const CMatrix e = s.covariances.embedded(j);
    for (int a = 0; a < 6; ++a) {
      if (std::find(allowed.begin(), allowed.end(), a) != allowed.end()) continue;
      for (int b = 0; b < 6; ++b) {
        EXPECT_EQ(e(a, b), Complex(0.0));
        EXPECT_EQ(e(b, a), Complex(0.0));
      }
    }
  }
}

TEST(CbpPerfect, MonotoneFeasibleTraces) {
  Rng rng(8);
  for (int rep = 0; rep < 6; ++rep) {
    const auto cfg = SystemConfig::uniform(3, 3, 2, 1, 1.0 + rep, 10.0, 5 + 5 * rep);
    const auto h = testing::random_channel(cfg, rng);
    const auto clusters = assign_clusters_instantaneous(h, 1 + rep % 3);
    const auto s = optimize_cbp_perfect(cfg, h, clusters, cfg.coherence_length);
    for (std::size_t k = 1; k < s.trace.size(); ++k)
      EXPECT_GE(s.trace[k].objective, s.trace[k - 1].objective - 1e-6);
    for (const auto& r : s.trace)
      for (int i = 0; i < 3; ++i) {
        EXPECT_LE(r.fronthaul_load[i], cfg.fronthaul_capacity[i] + 1e-6);
        EXPECT_LE(r.power[i], cfg.power_budget[i] + 1e-6);
      }
    // committed rates are supported by the design
    for (int j = 0; j < 3; ++j)
      EXPECT_LE(s.rates[j], cbp_user_rate(cfg, h, s.covariances, s.quantization, j) + 1e-6);
  }
}

TEST(CbpPerfect, LongCoherenceApproachesStochasticSingleDraw) {
  Rng rng(9);
  const auto cfg = SystemConfig::uniform(2, 2, 2, 1, 3.0, 10.0, 1000000);
  const auto h = testing::random_channel(cfg, rng);
  const auto clusters = assign_clusters_instantaneous(h, 2);
  const auto perfect = optimize_cbp_perfect(cfg, h, clusters, 1000000);
  SsumOptions opt;
  opt.outer_iterations = 40;
  const auto stochastic = optimize_cbp_stochastic(cfg, constant_source(h), clusters, opt);
  EXPECT_NEAR(objective(cfg, perfect), objective(cfg, stochastic), 1e-2);
}

TEST(CbpPerfect, ForcedQuantizationDegradesMonotonically) {
  // ample fronthaul, so the forced variance only eats into the power budget;
  // with a binding fronthaul a larger variance also frees precoding bits
  Rng rng(10);
  const auto cfg = SystemConfig::uniform(2, 2, 2, 1, 40.0, 10.0, 10);
  const auto h = testing::random_channel(cfg, rng);
  const auto clusters = assign_clusters_instantaneous(h, 2);
  double prev = 1e300;
  for (double s2 : {0.5, 1.0, 2.0, 3.0, 4.0, 4.9}) {
    const double obj = objective(cfg, optimize_cbp_perfect(cfg, h, clusters, 10, {}, s2));
    EXPECT_LE(obj, prev + 1e-6) << s2;
    prev = obj;
  }
  EXPECT_LT(prev, 0.5);
}

TEST(CbpPerfect, FullClustersAtUnitCoherenceMatchCapAlgebra) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto cfg = testing::random_config(rng);
    const auto clusters = assign_clusters(
        std::vector<std::vector<double>>(cfg.num_rus, std::vector<double>(cfg.num_mss, 1.0)), cfg.num_mss);
    const auto h = testing::random_channel(cfg, rng);
    const auto v = testing::random_clustered_covariance(cfg, clusters, rng);
    const auto q = testing::random_quantization(cfg, rng);
    const std::vector<double> zero(cfg.num_mss, 0.0);
    const auto cbp = cbp_fronthaul_loads(cfg, clusters, v, q, zero, 1);
    const auto cap = cap_fronthaul_loads(cfg, v, q);
    for (int i = 0; i < cfg.num_rus; ++i) EXPECT_NEAR(cbp[i], cap[i], 1e-9);
    const auto rates = cap_user_rates(cfg, h, v, q);
    for (int j = 0; j < cfg.num_mss; ++j) EXPECT_NEAR(cbp_user_rate(cfg, h, v, q, j), rates[j], 1e-9);
  }
}

TEST(CbpPerfect, RejectsMismatchedClusters) {
  const auto cfg = SystemConfig::uniform(2, 2, 1, 1, 1.0, 10.0, 5);
  const auto wrong = assign_clusters({{1.0, 2.0, 3.0}}, 1);
  EXPECT_THROW(optimize_cbp_perfect(cfg, ChannelRealization({1, 1}, {1, 1}), wrong, 5), std::invalid_argument);
}

}  // namespace
}  // namespace cran
