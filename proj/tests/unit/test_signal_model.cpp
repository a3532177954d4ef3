#include <cmath>

#include <gtest/gtest.h>

#include "cran/signal_model.hpp"
#include "instances.hpp"

namespace cran {
namespace {

using testing::random_channel;
using testing::random_config;
using testing::random_covariance;
using testing::random_psd;
using testing::random_quantization;

SystemConfig scalar_config(int mss = 1) { return SystemConfig::uniform(1, mss, 1, 1, 2.0, 10.0, 1); }

ChannelRealization scalar_channel(std::vector<Complex> h) {
  CMatrix m(static_cast<Eigen::Index>(h.size()), 1);
  for (std::size_t k = 0; k < h.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = h[k];
  return ChannelRealization(std::vector<int>(h.size(), 1), {1}, m);
}

PrecoderCovariance scalar_cov(std::vector<double> v) {
  auto c = PrecoderCovariance::full(static_cast<int>(v.size()), 1);
  for (std::size_t k = 0; k < v.size(); ++k) c.blocks[k] = CMatrix::Constant(1, 1, v[k]);
  return c;
}

QuantizationProfile variances(std::vector<double> s) { return {std::move(s), kQuantizationFloor}; }

TEST(Selectors, ShapesAndOrthogonality) {
  const auto c = SystemConfig::uniform(3, 2, 2, 2, 1.0, 1.0, 1);
  for (int i = 0; i < 3; ++i) {
    const RMatrix d = row_selector(c, i);
    EXPECT_EQ(d.rows(), 6);
    EXPECT_EQ(d.cols(), 2);
    EXPECT_TRUE((d.transpose() * d).isIdentity());
  }
  const RMatrix dc = column_selector(c, 1);
  EXPECT_EQ(dc(2, 0), 1.0);
  EXPECT_EQ(dc.sum(), 2.0);
  EXPECT_EQ(antennas_of(c, {0, 2}), (std::vector<int>{0, 1, 4, 5}));
  const RMatrix e = embedding_matrix({1, 4}, 6);
  EXPECT_EQ(e(1, 0), 1.0);
  EXPECT_EQ(e(4, 1), 1.0);
}

TEST(Linearize, ClosedForms) {
  Rng rng(1);
  const CMatrix a = random_psd(3, 3, 3.0, rng) + CMatrix::Identity(3, 3);
  EXPECT_NEAR(linearize_logdet(a, a), linalg::log2_det(a), 1e-12);
  const CMatrix b = random_psd(2, 2, 1.5, rng);
  EXPECT_NEAR(linearize_logdet(CMatrix::Identity(2, 2), b), (b.trace().real() - 2.0) / std::log(2.0), 1e-12);
  EXPECT_NEAR(linearize_logdet(2.0 * CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)), 2.0 - 1.0 / std::log(2.0),
              1e-12);
  EXPECT_NEAR(2.0 - 1.0 / std::log(2.0), 0.557305, 1e-6);
  EXPECT_THROW(linearize_logdet(CMatrix::Zero(2, 2), b), std::domain_error);
}

TEST(Linearize, UpperBoundsLogDet) {
  Rng rng(2);
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = 1 + rep % 4;
    const CMatrix a = random_psd(d, d, 4.0, rng) + 0.1 * CMatrix::Identity(d, d);
    const CMatrix b = random_psd(d, d, 4.0, rng) + 1e-3 * CMatrix::Identity(d, d);
    EXPECT_GE(linearize_logdet(a, b), linalg::log2_det(b) - 1e-9);
  }
}

TEST(CapRate, HandValues) {
  const auto c1 = scalar_config();
  EXPECT_NEAR(cap_user_rate(c1, scalar_channel({1.0}), scalar_cov({1.0}), variances({0.0}), 0), 1.0, 1e-14);
  EXPECT_NEAR(cap_user_rate(c1, scalar_channel({1.0}), scalar_cov({0.0}), variances({0.0}), 0), 0.0, 1e-14);
  const auto c2 = scalar_config(2);
  const double r1 = cap_user_rate(c2, scalar_channel({1.0, 1.0}), scalar_cov({3.0, 1.0}), variances({0.0}), 0);
  EXPECT_NEAR(r1, std::log2(5.0) - std::log2(2.0), 1e-14);
  EXPECT_NEAR(r1, 1.32193, 1e-5);
  // the operating point of the scalar fronthaul-limited optimum
  const double r = cap_user_rate(c1, scalar_channel({1.0}), scalar_cov({7.5}), variances({2.5}), 0);
  EXPECT_NEAR(r, std::log2(11.0) - std::log2(3.5), 1e-14);
}

TEST(CapRate, ZeroCovarianceGivesZeroEverywhere) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto c = random_config(rng);
    const auto v = PrecoderCovariance::full(c.num_mss, c.total_tx());
    const auto rates = cap_user_rates(c, random_channel(c, rng), v, random_quantization(c, rng));
    for (double r : rates) EXPECT_NEAR(r, 0.0, 1e-12);
  }
}

TEST(CapRate, VectorAndScalarFormsAgree) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const auto c = random_config(rng);
    const auto h = random_channel(c, rng);
    const auto v = random_covariance(c, rng);
    const auto q = random_quantization(c, rng);
    const auto all = cap_user_rates(c, h, v, q);
    double wsr = 0.0;
    for (int j = 0; j < c.num_mss; ++j) {
      EXPECT_NEAR(all[j], cap_user_rate(c, h, v, q, j), 1e-10);
      EXPECT_GE(all[j], -1e-12);
      wsr += c.rate_weights[j] * all[j];
    }
    EXPECT_NEAR(weighted_sum_rate(c, h, v, q), wsr, 1e-10);
  }
}

TEST(CapRate, NondecreasingInOwnCovariance) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const auto c = random_config(rng);
    const auto h = random_channel(c, rng);
    auto v = random_covariance(c, rng);
    const auto q = random_quantization(c, rng);
    const int j = rep % c.num_mss;
    const double before = cap_user_rate(c, h, v, q, j);
    v.blocks[j] += random_psd(c.total_tx(), 1, 1.0, rng);
    EXPECT_GE(cap_user_rate(c, h, v, q, j), before - 1e-10);
  }
}

TEST(Fronthaul, HandValues) {
  const auto c = scalar_config();
  EXPECT_NEAR(cap_fronthaul_rate(c, scalar_cov({0.0}), 0.7, 0), 0.0, 1e-14);
  EXPECT_NEAR(cap_fronthaul_rate(c, scalar_cov({1.0}), 1.0, 0), 1.0, 1e-14);
  EXPECT_NEAR(cap_fronthaul_rate(c, scalar_cov({3.0}), 1.0, 0), 2.0, 1e-14);
  EXPECT_NEAR(cap_fronthaul_rate(c, scalar_cov({7.5}), 2.5, 0), 2.0, 1e-14);
  EXPECT_THROW(cap_fronthaul_rate(c, scalar_cov({1.0}), 0.0, 0), std::invalid_argument);
}

TEST(Fronthaul, DecreasingInVariance) {
  Rng rng(6);
  const auto c = random_config(rng);
  const auto v = random_covariance(c, rng);
  double prev = cap_fronthaul_rate(c, v, 1e-3, 0);
  for (double s = 2e-3; s < 1e7; s *= 2.0) {
    const double f = cap_fronthaul_rate(c, v, s, 0);
    EXPECT_LT(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(Power, HandValuesAndLinearity) {
  const auto c1 = scalar_config();
  EXPECT_NEAR(transmit_power(c1, scalar_cov({0.0}), 0.0, 0), 0.0, 1e-15);
  EXPECT_NEAR(transmit_power(c1, scalar_cov({1.0}), 1.0, 0), 2.0, 1e-15);
  const auto c2 = SystemConfig::uniform(1, 1, 2, 1, 1.0, 1.0, 1);
  auto v = PrecoderCovariance::full(1, 2);
  v.blocks[0] = CMatrix::Identity(2, 2);
  EXPECT_NEAR(transmit_power(c2, v, 0.5, 0), 3.0, 1e-15);

  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const auto c = random_config(rng);
    const auto v1 = random_covariance(c, rng);
    const auto v2 = random_covariance(c, rng);
    const double a = 0.3 + rep * 0.01, b = 1.7;
    auto mix = v1;
    for (int j = 0; j < c.num_mss; ++j) mix.blocks[j] = a * v1.blocks[j] + b * v2.blocks[j];
    for (int i = 0; i < c.num_rus; ++i)
      EXPECT_NEAR(transmit_power(c, mix, a * 0.4 + b * 1.1, i),
                  a * transmit_power(c, v1, 0.4, i) + b * transmit_power(c, v2, 1.1, i), 1e-10);
  }
}

TEST(Surrogates, TightAndBoundingOverRandomInstances) {
  Rng rng(8);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto c = random_config(rng);
    const auto h = random_channel(c, rng);
    const SurrogateExpansionPoint point{random_covariance(c, rng), random_quantization(c, rng), h};
    const auto v = random_covariance(c, rng, 5.0);
    const auto q = random_quantization(c, rng);
    for (int j = 0; j < c.num_mss; ++j) {
      EXPECT_NEAR(cap_rate_surrogate(c, point, point.covariance, point.quantization, j),
                  cap_user_rate(c, h, point.covariance, point.quantization, j), 1e-9);
      EXPECT_LE(cap_rate_surrogate(c, point, v, q, j), cap_user_rate(c, h, v, q, j) + 1e-9);
    }
    for (int i = 0; i < c.num_rus; ++i) {
      const double s0 = point.quantization.variances[i];
      EXPECT_NEAR(cap_fronthaul_surrogate(c, point, point.covariance, s0, i),
                  cap_fronthaul_rate(c, point.covariance, s0, i), 1e-9);
      EXPECT_GE(cap_fronthaul_surrogate(c, point, v, q.variances[i], i),
                cap_fronthaul_rate(c, v, q.variances[i], i) - 1e-9);
    }
  }
}

TEST(Surrogates, SingleMsRateIsExactWhenVarianceFixed) {
  Rng rng(9);
  for (int rep = 0; rep < 100; ++rep) {
    auto c = random_config(rng);
    c.num_mss = 1;
    c.rx_antennas.resize(1);
    c.streams.resize(1);
    c.rate_weights.resize(1);
    const auto h = random_channel(c, rng);
    const SurrogateExpansionPoint point{random_covariance(c, rng), random_quantization(c, rng), h};
    const auto v = random_covariance(c, rng, 4.0);
    EXPECT_NEAR(cap_rate_surrogate(c, point, v, point.quantization, 0), cap_user_rate(c, h, v, point.quantization, 0),
                1e-9);
  }
}

TEST(Surrogates, FronthaulAtZeroCovariance) {
  const auto c = SystemConfig::uniform(1, 1, 3, 1, 1.0, 1.0, 1);
  const auto zero = PrecoderCovariance::full(1, 3);
  const double s0 = 0.8, s = 1.9;
  const SurrogateExpansionPoint point{zero, variances({s0}), ChannelRealization({1}, {3})};
  const double n = 3.0;
  const double expected = n * std::log2(s0) + n / std::log(2.0) * (s - s0) / s0 - n * std::log2(s);
  EXPECT_NEAR(cap_fronthaul_surrogate(c, point, zero, s, 0), expected, 1e-12);
}

TEST(Cbp, ReducesToCapWithFullClusters) {
  Rng rng(10);
  for (int rep = 0; rep < 100; ++rep) {
    const auto c = random_config(rng);
    const auto h = random_channel(c, rng);
    const auto v = random_covariance(c, rng);
    const auto q = random_quantization(c, rng);
    for (int j = 0; j < c.num_mss; ++j)
      EXPECT_NEAR(cbp_user_rate(c, h, v, q, j), cap_user_rate(c, h, v, q, j), 1e-12);
    for (int i = 0; i < c.num_rus; ++i)
      EXPECT_NEAR(cbp_precoder_fronthaul_rate(c, v, q.variances[i], i, 1), cap_fronthaul_rate(c, v, q.variances[i], i),
                  1e-12);
  }
}

TEST(Cbp, ClusteredSurrogateTightAndBounding) {
  Rng rng(11);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto c = random_config(rng);
    const auto clusters = testing::random_clusters(c, 1 + rep % c.num_mss, rng);
    const auto h = random_channel(c, rng);
    const auto zero = QuantizationProfile::zeros(c.num_rus);
    const SurrogateExpansionPoint point{testing::random_clustered_covariance(c, clusters, rng), zero, h};
    const auto v = testing::random_clustered_covariance(c, clusters, rng, 4.0);
    for (int j = 0; j < c.num_mss; ++j) {
      EXPECT_NEAR(cbp_rate_surrogate(c, point, point.covariance, zero, j),
                  cbp_user_rate(c, h, point.covariance, zero, j), 1e-9);
      EXPECT_LE(cbp_rate_surrogate(c, point, v, zero, j), cbp_user_rate(c, h, v, zero, j) + 1e-9);
    }
  }
}

TEST(Cbp, HandValues) {
  const auto c = scalar_config();
  EXPECT_NEAR(cbp_user_rate(c, scalar_channel({1.0}), scalar_cov({10.0}), variances({0.0}), 0), std::log2(11.0),
              1e-14);
  EXPECT_NEAR(std::log2(11.0), 3.45943, 1e-5);
  EXPECT_NEAR(cbp_precoder_fronthaul_rate(c, scalar_cov({1.0}), 1.0, 0, 20), 0.05, 1e-15);
  EXPECT_LT(cbp_precoder_fronthaul_rate(c, scalar_cov({1.0}), 1.0, 0, 1000000), 1e-5);
  EXPECT_THROW(cbp_precoder_fronthaul_rate(c, scalar_cov({1.0}), 1.0, 0, 0), std::invalid_argument);
}

TEST(Covariance, EmbeddingRespectsSupport) {
  auto v = PrecoderCovariance::clustered({{0, 3}, {1}}, 4);
  v.blocks[0] = CMatrix::Identity(2, 2);
  v.blocks[1] = CMatrix::Constant(1, 1, 2.0);
  const CMatrix e = v.embedded(0);
  EXPECT_EQ(e(3, 3), Complex(1.0));
  EXPECT_EQ(e(1, 1), Complex(0.0));
  EXPECT_EQ(e(2, 2), Complex(0.0));
  EXPECT_EQ(v.sum()(1, 1), Complex(2.0));
  EXPECT_NO_THROW(v.validate());
  v.blocks[1] = CMatrix::Constant(1, 1, -1.0);
  EXPECT_THROW(v.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace cran
