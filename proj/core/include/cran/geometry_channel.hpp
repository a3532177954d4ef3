#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cran/linalg.hpp"

namespace cran {

using Rng = std::mt19937_64;

/// Static description of the C-RAN cluster and the propagation scenario.
/// Capacities are in bits per downlink channel use, powers are linear and
/// normalized to the unit receiver noise power.
struct SystemConfig {
  int num_rus = 0;
  int num_mss = 0;
  std::vector<int> tx_antennas;         // per RU
  std::vector<int> rx_antennas;         // per MS
  std::vector<int> streams;             // per MS, <= rx_antennas
  int coherence_length = 1;             // channel uses per block
  std::vector<double> fronthaul_capacity;  // per RU
  std::vector<double> power_budget;        // per RU
  std::vector<double> rate_weights;        // per MS

  double area_side = 500.0;
  double ref_distance = 50.0;
  double pathloss_exponent = 3.0;
  double scattering_radius = 10.0;

  /// Homogeneous cluster: every RU/MS identical, one stream per receive
  /// antenna, unit weights.
  static SystemConfig uniform(int num_rus, int num_mss, int tx_per_ru, int rx_per_ms,
                              double fronthaul, double power, int coherence);

  int total_tx() const;
  int total_rx() const;
  int total_streams() const;
  int tx_offset(int ru) const;
  int rx_offset(int ms) const;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct NetworkGeometry {
  std::vector<Point2> rus;
  std::vector<Point2> mss;
};

/// Second-order statistics of one RU -> MS link.
struct LinkStatistics {
  CMatrix tx_correlation;  // N_t,i x N_t,i
  CMatrix rx_correlation;  // N_r,j x N_r,j
  double pathloss = 1.0;
  double angle = 0.0;      // bearing of the MS seen from the RU, radians
  double spread = 0.0;     // angular spread, radians
  double distance = 0.0;   // meters
};

/// The CU's stochastic CSI: one LinkStatistics per (MS j, RU i).
struct ChannelStatistics {
  int num_rus = 0;
  int num_mss = 0;
  std::vector<LinkStatistics> links;  // row-major in (j, i)

  const LinkStatistics& link(int ms, int ru) const { return links[ms * num_rus + ru]; }
  LinkStatistics& link(int ms, int ru) { return links[ms * num_rus + ru]; }

  /// E ||H_ji||_F^2 = tr(Sigma_R) tr(Sigma_T).
  double mean_square_norm(int ms, int ru) const;
};

/// One coherence block: the stacked N_r x N_t channel matrix.
class ChannelRealization {
 public:
  ChannelRealization() = default;
  ChannelRealization(std::vector<int> rx_antennas, std::vector<int> tx_antennas);
  ChannelRealization(std::vector<int> rx_antennas, std::vector<int> tx_antennas, CMatrix stacked);

  int num_mss() const { return static_cast<int>(rx_.size()); }
  int num_rus() const { return static_cast<int>(tx_.size()); }
  const std::vector<int>& rx_antennas() const { return rx_; }
  const std::vector<int>& tx_antennas() const { return tx_; }

  /// H_ji, N_r,j x N_t,i
  CMatrix block(int ms, int ru) const;
  void set_block(int ms, int ru, const CMatrix& value);
  /// H_j = [H_j1 ... H_jN_R], N_r,j x N_t
  CMatrix ms_channel(int ms) const;
  const CMatrix& stacked() const { return h_; }

 private:
  std::vector<int> rx_;
  std::vector<int> tx_;
  std::vector<int> row_off_;
  std::vector<int> col_off_;
  CMatrix h_;
};

/// Uniform i.i.d. placement of RUs and MSs on [0, side]^2.
NetworkGeometry place_nodes(const SystemConfig& config, std::uint64_t seed);

/// 1 / (1 + (d / d0)^eta)
double path_loss(double distance, double ref_distance, double exponent);

/// One-ring transmit correlation of an `n_ant` element half-wavelength ULA:
///   [S]_{mn} = alpha / (2 delta) * int_{theta-delta}^{theta+delta} exp(-j pi (m-n) sin phi) dphi
/// Integrated with 201-node Gauss-Legendre, then projected onto the PSD cone.
CMatrix one_ring_covariance(double theta, double delta, double alpha, int n_ant);

/// Raw quadrature result before symmetrization and eigenvalue clamping.
CMatrix one_ring_covariance_unprojected(double theta, double delta, double alpha, int n_ant);

ChannelStatistics build_statistics(const NetworkGeometry& geometry, const SystemConfig& config);

/// H_ji = Sigma_R^{1/2} G Sigma_T^{1/2}, G with i.i.d. CN(0, 1) entries.
ChannelRealization sample_channel(const ChannelStatistics& stats, Rng& rng);

/// Same as above with precomputed square roots; use when drawing many blocks.
class ChannelSampler {
 public:
  explicit ChannelSampler(const ChannelStatistics& stats);
  ChannelRealization operator()(Rng& rng) const;

 private:
  int num_rus_ = 0;
  int num_mss_ = 0;
  std::vector<int> rx_;
  std::vector<int> tx_;
  std::vector<CMatrix> rx_sqrt_;
  std::vector<CMatrix> tx_sqrt_;
};

/// Circularly-symmetric complex Gaussian with unit variance.
Complex complex_normal(Rng& rng);

}  // namespace cran
