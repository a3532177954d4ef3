#pragma once

#include <vector>

#include "cran/geometry_channel.hpp"
#include "cran/linalg.hpp"

namespace cran {

/// Smallest admissible quantization noise variance; keeps -log(sigma^2) finite.
inline constexpr double kQuantizationFloor = 1e-10;

/// Per-MS transmit covariances. Each MS j owns a local Hermitian PSD block
/// acting on the global antenna indices `support[j]`; the N_t x N_t
/// covariance is E_j V_j E_j^T with E_j the 0/1 embedding of that support.
/// CAP uses full supports, CBP restricts supports to the serving RUs.
struct PrecoderCovariance {
  int total_tx = 0;
  std::vector<CMatrix> blocks;
  std::vector<std::vector<int>> support;

  /// All-zero CAP-form covariance: every MS spans all N_t antennas.
  static PrecoderCovariance full(int num_mss, int total_tx);
  /// All-zero covariance on the given supports.
  static PrecoderCovariance clustered(std::vector<std::vector<int>> supports, int total_tx);

  int num_mss() const { return static_cast<int>(blocks.size()); }
  CMatrix embedded(int ms) const;
  CMatrix sum() const;
  CMatrix sum_except(int ms) const;
  /// Throws if a block is not square, mismatches its support, or is not PSD
  /// within `tolerance`.
  void validate(double tolerance = 1e-9) const;
};

/// Independent per-RU quantization noise variances (sigma_x^2 for CAP,
/// sigma_w^2 for CBP) with a common floor.
struct QuantizationProfile {
  std::vector<double> variances;
  double floor = kQuantizationFloor;

  static QuantizationProfile zeros(int num_rus) { return {std::vector<double>(num_rus, 0.0), 0.0}; }
  void validate() const;
};

/// D_i^r: N_t x N_t,i row selector of RU i.
RMatrix row_selector(const SystemConfig& config, int ru);
/// D_j^c: N_r x N_r,j column selector of MS j.
RMatrix column_selector(const SystemConfig& config, int ms);
/// E: N_t x |support| embedding of a support set.
RMatrix embedding_matrix(const std::vector<int>& support, int total_tx);
/// Global antenna indices of the given RUs, in RU order.
std::vector<int> antennas_of(const SystemConfig& config, const std::vector<int>& rus);

/// Omega = blockdiag(sigma_i^2 I_{N_t,i}), N_t x N_t.
CMatrix quantization_covariance(const SystemConfig& config, const QuantizationProfile& q);

/// D_i^T M D_i for an N_t x N_t matrix M.
CMatrix ru_block(const SystemConfig& config, const CMatrix& m, int ru);

/// First-order expansion of log2 det around A, evaluated at B:
///   log2 det A + tr(A^{-1} (B - A)) / ln 2
/// Throws std::domain_error when A is not positive definite.
double linearize_logdet(const CMatrix& a, const CMatrix& b);

double cap_user_rate(const SystemConfig& config, const ChannelRealization& h,
                     const PrecoderCovariance& v, const QuantizationProfile& q, int ms);

/// All per-MS rates in one pass.
std::vector<double> cap_user_rates(const SystemConfig& config, const ChannelRealization& h,
                                   const PrecoderCovariance& v, const QuantizationProfile& q);

double weighted_sum_rate(const SystemConfig& config, const ChannelRealization& h,
                         const PrecoderCovariance& v, const QuantizationProfile& q);

/// log2 det(D_i^T (sum V) D_i + sigma^2 I) - N_t,i log2 sigma^2
double cap_fronthaul_rate(const SystemConfig& config, const PrecoderCovariance& v, double sigma2,
                          int ru, double floor = kQuantizationFloor);

/// tr(D_i^T (sum V) D_i) + N_t,i sigma^2
double transmit_power(const SystemConfig& config, const PrecoderCovariance& v, double sigma2, int ru);

/// Snapshot around which the DC surrogates are expanded.
struct SurrogateExpansionPoint {
  PrecoderCovariance covariance;
  QuantizationProfile quantization;
  ChannelRealization channel;
};

/// Concave lower bound on cap_user_rate, tight at the expansion point:
/// the interference log-det is replaced by its tangent.
double cap_rate_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                          const PrecoderCovariance& v, const QuantizationProfile& q, int ms);

/// Convex upper bound on cap_fronthaul_rate, tight at the expansion point.
double cap_fronthaul_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                               const PrecoderCovariance& v, double sigma2, int ru,
                               double floor = kQuantizationFloor);

/// CBP per-MS rate; identical algebra to CAP with clustered covariances and
/// the precoder quantization noise Omega_w.
double cbp_user_rate(const SystemConfig& config, const ChannelRealization& h,
                     const PrecoderCovariance& vt, const QuantizationProfile& q, int ms);

/// CBP rate lower bound (zero quantization noise when q is all zeros).
double cbp_rate_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                          const PrecoderCovariance& vt, const QuantizationProfile& q, int ms);

/// Precoder compression rate amortized over a coherence block of T uses.
double cbp_precoder_fronthaul_rate(const SystemConfig& config, const PrecoderCovariance& vt,
                                   double sigma2, int ru, int coherence,
                                   double floor = kQuantizationFloor);

}  // namespace cran
