#pragma once

#include <optional>
#include <vector>

#include "cran/cap_optimizer.hpp"

namespace cran {

/// MS-to-RU association. served_mss[i] is M_i, serving_rus[j] is B_j, both
/// sorted ascending.
struct ClusterAssignment {
  std::vector<std::vector<int>> served_mss;
  std::vector<std::vector<int>> serving_rus;
  int cluster_size = 0;

  int num_rus() const { return static_cast<int>(served_mss.size()); }
  int num_mss() const { return static_cast<int>(serving_rus.size()); }
  /// Checks |M_i| = min(N_c, N_M) and the j in M_i <=> i in B_j duality.
  void validate() const;
};

/// Generic selection: RU i serves the N_c MSs with the largest score[i][j],
/// ties to the lower MS index.
ClusterAssignment assign_clusters(const std::vector<std::vector<double>>& score, int cluster_size);

/// Ranks by ||H_ji||_F of the current block.
ClusterAssignment assign_clusters_instantaneous(const ChannelRealization& h, int cluster_size);

/// Ranks by E ||H_ji||_F^2 = N_r,j tr(Sigma_T,ji).
ClusterAssignment assign_clusters_stochastic(const ChannelStatistics& stats, int cluster_size);

/// MSs with positive weight and no serving RU.
std::vector<int> unserved_mss(const ClusterAssignment& clusters, const SystemConfig& config);

struct CbpSolution {
  ClusterAssignment clusters;
  PrecoderCovariance covariances;    // supports restricted to the serving RUs
  std::vector<double> rates;         // committed stream rates R_j*
  QuantizationProfile quantization;  // sigma_w^2; all zero on the stochastic path
  std::vector<double> objective_trace;
  std::vector<IterationRecord> trace;
  int sample_count = 0;
};

/// Stochastic-CSI design with fixed clusters (sigma_w^2 = 0).
CbpSolution optimize_cbp_stochastic(const SystemConfig& config, const ChannelStatistics& stats,
                                    const ClusterAssignment& clusters, const SsumOptions& options = {});
CbpSolution optimize_cbp_stochastic(const SystemConfig& config, const ChannelSource& source,
                                    const ClusterAssignment& clusters, const SsumOptions& options = {});

/// Instantaneous-CSI design for one block with coherence length T. When
/// `forced_quantization` is set, every active RU uses that sigma_w^2
/// instead of optimizing it.
CbpSolution optimize_cbp_perfect(const SystemConfig& config, const ChannelRealization& h,
                                 const ClusterAssignment& clusters, int coherence, const SsumOptions& options = {},
                                 std::optional<double> forced_quantization = std::nullopt);

/// Per-RU fronthaul loads: sum_{j in M_i} R_j, plus C_i / T when T is given.
std::vector<double> cbp_fronthaul_loads(const SystemConfig& config, const ClusterAssignment& clusters,
                                        const PrecoderCovariance& v, const QuantizationProfile& q,
                                        const std::vector<double>& rates, std::optional<int> coherence);

}  // namespace cran
