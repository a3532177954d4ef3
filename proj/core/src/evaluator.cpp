#include "cran/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace cran {

namespace {

constexpr int kChunk = 16;

// fix the arbitrary phase of an eigenvector so results are reproducible
void canonical_phase(CVector& u) {
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double a = std::abs(u(k));
    if (a > 1e-12) {
      u *= std::conj(u(k)) / a;
      return;
    }
  }
}

double weighted(const SystemConfig& config, const std::vector<double>& r) {
  double s = 0.0;
  for (int j = 0; j < config.num_mss; ++j) s += config.rate_weights[j] * r[j];
  return s;
}

ErgodicEstimate finish(const SystemConfig& config, const RateAccumulator& acc,
                       const std::vector<double>& committed) {
  ErgodicEstimate e;
  e.samples = static_cast<int>(acc.count());
  const RVector& m = acc.mean();
  e.per_ms_mean.assign(m.data(), m.data() + m.size());
  e.per_ms_delivered = e.per_ms_mean;
  // MSs capped by their committed rate contribute a constant
  RVector w = RVector::Zero(config.num_mss);
  for (int j = 0; j < config.num_mss; ++j) {
    if (!committed.empty() && committed[j] < e.per_ms_mean[j]) {
      e.per_ms_delivered[j] = committed[j];
    } else {
      w(j) = config.rate_weights[j];
    }
  }
  e.mean = weighted(config, e.per_ms_delivered);
  const double var = std::max(0.0, w.dot(acc.covariance() * w));
  e.std_error = std::sqrt(var / static_cast<double>(acc.count()));
  return e;
}

}  // namespace

PrecoderCovariance Precoder::covariance() const {
  const int nm = static_cast<int>(columns.size());
  const int nt = nm > 0 ? static_cast<int>(columns[0].rows()) : 0;
  PrecoderCovariance v = PrecoderCovariance::full(nm, nt);
  for (int j = 0; j < nm; ++j) v.blocks[j] = linalg::hermitian_part(columns[j] * columns[j].adjoint());
  return v;
}

Precoder rank_reduce(const PrecoderCovariance& v, const QuantizationProfile& q, const SystemConfig& config) {
  if (v.num_mss() != config.num_mss) throw std::invalid_argument("rank_reduce: MS count mismatch");
  if (static_cast<int>(q.variances.size()) != config.num_rus)
    throw std::invalid_argument("rank_reduce: quantization profile size mismatch");
  const int nt = config.total_tx();
  Precoder p;
  p.columns.resize(config.num_mss);
  for (int j = 0; j < config.num_mss; ++j) {
    const auto& s = v.support[j];
    const int m = std::min<int>(config.streams[j], static_cast<int>(s.size()));
    p.columns[j] = CMatrix::Zero(nt, config.streams[j]);
    if (s.empty()) continue;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(linalg::hermitian_part(v.blocks[j]));
    if (eig.info() != Eigen::Success) throw std::runtime_error("rank_reduce: eigendecomposition failed");
    const auto d = static_cast<Eigen::Index>(s.size());
    for (int c = 0; c < m; ++c) {
      const Eigen::Index k = d - 1 - c;  // eigenvalues ascend
      const double lambda = std::max(0.0, eig.eigenvalues()(k));
      CVector u = eig.eigenvectors().col(k);
      canonical_phase(u);
      for (Eigen::Index r = 0; r < d; ++r) p.columns[j](s[r], c) = std::sqrt(lambda) * u(r);
    }
  }
  double gamma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < config.num_rus; ++i) {
    const int off = config.tx_offset(i);
    const int n = config.tx_antennas[i];
    double signal = 0.0;
    for (const auto& w : p.columns) signal += w.middleRows(off, n).squaredNorm();
    if (signal <= 0.0) continue;
    const double room = std::max(0.0, config.power_budget[i] - n * q.variances[i]);
    gamma = std::min(gamma, std::sqrt(room / signal));
  }
  if (!std::isfinite(gamma)) {
    p.zero = true;
    p.gamma = 0.0;
    return p;
  }
  p.gamma = gamma;
  for (auto& w : p.columns) w *= gamma;
  return p;
}

void EvaluationOptions::validate() const {
  if (samples < 2) throw std::invalid_argument("evaluation needs at least 2 samples");
  if (workers < 1) throw std::invalid_argument("evaluation needs at least 1 worker");
}

RateAccumulator::RateAccumulator(int dims) : mean_(RVector::Zero(dims)), m2_(RMatrix::Zero(dims, dims)) {}

void RateAccumulator::add(const std::vector<double>& x) {
  if (static_cast<Eigen::Index>(x.size()) != mean_.size())
    throw std::invalid_argument("RateAccumulator: dimension mismatch");
  const RVector v = Eigen::Map<const RVector>(x.data(), mean_.size());
  ++n_;
  const RVector delta = v - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.noalias() += delta * (v - mean_).transpose();
}

void RateAccumulator::merge(const RateAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const RVector delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  m2_ += other.m2_ + delta * delta.transpose() * (na * nb / n);
  n_ += other.n_;
}

RMatrix RateAccumulator::covariance() const {
  if (n_ < 2) return RMatrix::Zero(mean_.size(), mean_.size());
  const RMatrix c = m2_ / static_cast<double>(n_ - 1);
  return 0.5 * (c + c.transpose());
}

RateAccumulator monte_carlo(int samples, std::uint64_t seed, int workers,
                            const std::function<std::vector<double>(Rng&)>& per_sample, int dims) {
  if (samples < 2) throw std::invalid_argument("monte_carlo: need at least 2 samples");
  const int chunks = (samples + kChunk - 1) / kChunk;
  std::vector<RateAccumulator> partial(chunks, RateAccumulator(dims));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= chunks) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const int end = std::min(samples, (c + 1) * kChunk);
        for (int s = c * kChunk; s < end; ++s) {
          Rng rng(linalg::mix_seed(seed, static_cast<std::uint64_t>(s)));
          partial[c].add(per_sample(rng));
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::clamp(workers, 1, chunks);
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  RateAccumulator total(dims);
  for (const auto& p : partial) total.merge(p);
  return total;
}

ErgodicEstimate ergodic_sum_rate(const SystemConfig& config, const ChannelStatistics& stats,
                                 const CapSolution& design, const EvaluationOptions& options) {
  options.validate();
  const Precoder p = rank_reduce(design.covariances, design.quantization, config);
  const PrecoderCovariance w = p.covariance();
  const ChannelSampler sampler(stats);
  const auto acc = monte_carlo(
      options.samples, options.seed, options.workers,
      [&](Rng& rng) { return cap_user_rates(config, sampler(rng), w, design.quantization); }, config.num_mss);
  return finish(config, acc, {});
}

ErgodicEstimate ergodic_sum_rate(const SystemConfig& config, const ChannelStatistics& stats,
                                 const CbpSolution& design, const EvaluationOptions& options) {
  options.validate();
  const Precoder p = rank_reduce(design.covariances, design.quantization, config);
  const PrecoderCovariance w = p.covariance();
  const ChannelSampler sampler(stats);
  const auto acc = monte_carlo(
      options.samples, options.seed, options.workers,
      [&](Rng& rng) { return cap_user_rates(config, sampler(rng), w, design.quantization); }, config.num_mss);
  return finish(config, acc, design.rates);
}

ErgodicEstimate ergodic_sum_rate_perfect_cap(const SystemConfig& config, const ChannelStatistics& stats,
                                             const SsumOptions& mm, const EvaluationOptions& options) {
  options.validate();
  const ChannelSampler sampler(stats);
  const auto acc = monte_carlo(
      options.samples, options.seed, options.workers,
      [&](Rng& rng) {
        const ChannelRealization h = sampler(rng);
        const CapSolution s = optimize_cap_perfect(config, h, mm);
        const Precoder p = rank_reduce(s.covariances, s.quantization, config);
        return cap_user_rates(config, h, p.covariance(), s.quantization);
      },
      config.num_mss);
  return finish(config, acc, {});
}

ErgodicEstimate ergodic_sum_rate_perfect_cbp(const SystemConfig& config, const ChannelStatistics& stats,
                                             int cluster_size, const SsumOptions& mm,
                                             const EvaluationOptions& options) {
  options.validate();
  const ChannelSampler sampler(stats);
  const auto acc = monte_carlo(
      options.samples, options.seed, options.workers,
      [&](Rng& rng) {
        const ChannelRealization h = sampler(rng);
        const auto clusters = assign_clusters_instantaneous(h, cluster_size);
        const CbpSolution s = optimize_cbp_perfect(config, h, clusters, config.coherence_length, mm);
        const Precoder p = rank_reduce(s.covariances, s.quantization, config);
        std::vector<double> r = cap_user_rates(config, h, p.covariance(), s.quantization);
        // per block the committed rate caps what is delivered
        for (int j = 0; j < config.num_mss; ++j) r[j] = std::min(r[j], s.rates[j]);
        return r;
      },
      config.num_mss);
  return finish(config, acc, {});
}

}  // namespace cran
