#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "cran/convex_backend.hpp"
#include "cran/geometry_channel.hpp"
#include "cran/signal_model.hpp"

namespace cran {

/// Draws one coherence-block channel. The default source samples the
/// Kronecker model from ChannelStatistics; tests substitute fixed channels.
using ChannelSource = std::function<ChannelRealization(Rng&)>;

struct SsumOptions {
  int outer_iterations = 100;
  double inner_tolerance = 1e-4;  // relative change of the surrogate objective
  int inner_max = 20;
  int inner_min = 2;
  int mm_max_iterations = 50;     // perfect-CSI MM cap
  std::uint64_t seed = 0;
  convex::SolveOptions solver;

  void validate() const;
};

/// One inner (or MM) iterate, shared by the CAP and CBP optimizers.
struct IterationRecord {
  int outer = 0;                       // n; 0 on the perfect-CSI path
  int inner = 0;                       // r, or the MM iteration
  double surrogate_objective = 0.0;
  double objective = 0.0;              // true weighted sum-rate (averaged over stored draws when stochastic)
  std::vector<double> fronthaul_load;  // left-hand side of each fronthaul constraint
  std::vector<double> power;           // per-RU transmit power
  int newton_steps = 0;
};

struct CapSolution {
  PrecoderCovariance covariances;
  QuantizationProfile quantization;
  std::vector<double> surrogate_objective_trace;
  std::vector<IterationRecord> trace;
  int sample_count = 0;
};

/// Initial point: per-RU scaled identity covariances using 90% of the power
/// budget and quantization variances placing every fronthaul load at 90% of
/// its capacity. RUs with zero capacity stay silent at the variance floor.
std::pair<PrecoderCovariance, QuantizationProfile> init_cap(const SystemConfig& config);

/// Stochastic-CSI design (nested SSUM outer loop and MM inner loop).
CapSolution optimize_cap_stochastic(const SystemConfig& config, const ChannelStatistics& stats,
                                    const SsumOptions& options = {});
CapSolution optimize_cap_stochastic(const SystemConfig& config, const ChannelSource& source,
                                    const SsumOptions& options = {});

/// Instantaneous-CSI design for one coherence block (MM on the DC program).
CapSolution optimize_cap_perfect(const SystemConfig& config, const ChannelRealization& h,
                                 const SsumOptions& options = {});

/// Per-RU fronthaul rates and powers of a CAP design.
std::vector<double> cap_fronthaul_loads(const SystemConfig& config, const PrecoderCovariance& v,
                                        const QuantizationProfile& q);
std::vector<double> cap_powers(const SystemConfig& config, const PrecoderCovariance& v,
                               const QuantizationProfile& q);

}  // namespace cran
