#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cran/cap_optimizer.hpp"
#include "cran/cbp_optimizer.hpp"

namespace cran {

/// Per-MS precoders W_j (N_t x M_j, embedded) after rank reduction with a
/// common power normalization gamma.
struct Precoder {
  std::vector<CMatrix> columns;
  double gamma = 0.0;
  bool zero = false;  // nothing to transmit; gamma undefined

  /// W_j W_j^H as a full-support covariance.
  PrecoderCovariance covariance() const;
};

/// Top-M_j eigenvectors of each V_j scaled by the square roots of their
/// eigenvalues, then one common scale so that every RU meets its power
/// budget and at least one meets it with equality.
Precoder rank_reduce(const PrecoderCovariance& v, const QuantizationProfile& q, const SystemConfig& config);

struct ErgodicEstimate {
  double mean = 0.0;       // weighted sum of delivered per-MS rates
  double std_error = 0.0;
  int samples = 0;
  std::vector<double> per_ms_mean;       // evaluated ergodic rate per MS
  std::vector<double> per_ms_delivered;  // rate counted in `mean`
};

struct EvaluationOptions {
  int samples = 500;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

/// Streaming mean/covariance of per-MS rate vectors; merges are
/// order-sensitive only through their fixed call order.
class RateAccumulator {
 public:
  explicit RateAccumulator(int dims = 0);
  void add(const std::vector<double>& x);
  void merge(const RateAccumulator& other);
  long count() const { return n_; }
  const RVector& mean() const { return mean_; }
  /// Unbiased sample covariance.
  RMatrix covariance() const;

 private:
  long n_ = 0;
  RVector mean_;
  RMatrix m2_;
};

/// Runs `per_sample` (returning per-MS rates) on samples 0..n-1, each with
/// its own generator seeded from (seed, index), in fixed-size chunks merged
/// in chunk order. Results do not depend on the worker count.
RateAccumulator monte_carlo(int samples, std::uint64_t seed, int workers,
                            const std::function<std::vector<double>(Rng&)>& per_sample, int dims);

/// Stochastic-CSI CAP: the fixed design on fresh draws.
ErgodicEstimate ergodic_sum_rate(const SystemConfig& config, const ChannelStatistics& stats,
                                 const CapSolution& design, const EvaluationOptions& options);

/// Stochastic-CSI CBP: fixed design and clusters on fresh draws; the
/// delivered rate of MS j is min(R_j*, evaluated ergodic rate).
ErgodicEstimate ergodic_sum_rate(const SystemConfig& config, const ChannelStatistics& stats,
                                 const CbpSolution& design, const EvaluationOptions& options);

/// Perfect-CSI CAP: per draw, run the per-block design, then evaluate.
ErgodicEstimate ergodic_sum_rate_perfect_cap(const SystemConfig& config, const ChannelStatistics& stats,
                                             const SsumOptions& mm, const EvaluationOptions& options);

/// Perfect-CSI CBP: per draw, cluster by instantaneous norms, run the
/// per-block design, deliver min(R_j*, evaluated rate).
ErgodicEstimate ergodic_sum_rate_perfect_cbp(const SystemConfig& config, const ChannelStatistics& stats,
                                             int cluster_size, const SsumOptions& mm,
                                             const EvaluationOptions& options);

}  // namespace cran
