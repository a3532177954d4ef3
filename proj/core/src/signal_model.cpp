#include "cran/signal_model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace cran {

PrecoderCovariance PrecoderCovariance::full(int num_mss, int total_tx) {
  std::vector<int> all(total_tx);
  std::iota(all.begin(), all.end(), 0);
  return clustered(std::vector<std::vector<int>>(num_mss, all), total_tx);
}

PrecoderCovariance PrecoderCovariance::clustered(std::vector<std::vector<int>> supports, int total_tx) {
  PrecoderCovariance v;
  v.total_tx = total_tx;
  v.support = std::move(supports);
  v.blocks.reserve(v.support.size());
  for (const auto& s : v.support) {
    const auto n = static_cast<Eigen::Index>(s.size());
    v.blocks.push_back(CMatrix::Zero(n, n));
  }
  return v;
}

CMatrix PrecoderCovariance::embedded(int ms) const {
  CMatrix out = CMatrix::Zero(total_tx, total_tx);
  const auto& s = support[ms];
  const auto& b = blocks[ms];
  for (std::size_t r = 0; r < s.size(); ++r)
    for (std::size_t c = 0; c < s.size(); ++c) out(s[r], s[c]) = b(r, c);
  return out;
}

CMatrix PrecoderCovariance::sum() const {
  CMatrix out = CMatrix::Zero(total_tx, total_tx);
  for (int j = 0; j < num_mss(); ++j) {
    const auto& s = support[j];
    const auto& b = blocks[j];
    for (std::size_t r = 0; r < s.size(); ++r)
      for (std::size_t c = 0; c < s.size(); ++c) out(s[r], s[c]) += b(r, c);
  }
  return out;
}

CMatrix PrecoderCovariance::sum_except(int ms) const {
  CMatrix out = CMatrix::Zero(total_tx, total_tx);
  for (int j = 0; j < num_mss(); ++j) {
    if (j == ms) continue;
    const auto& s = support[j];
    const auto& b = blocks[j];
    for (std::size_t r = 0; r < s.size(); ++r)
      for (std::size_t c = 0; c < s.size(); ++c) out(s[r], s[c]) += b(r, c);
  }
  return out;
}

void PrecoderCovariance::validate(double tolerance) const {
  if (blocks.size() != support.size())
    throw std::invalid_argument("PrecoderCovariance: blocks/support length mismatch");
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const auto n = static_cast<Eigen::Index>(support[j].size());
    if (blocks[j].rows() != n || blocks[j].cols() != n)
      throw std::invalid_argument("PrecoderCovariance: block " + std::to_string(j) + " has wrong shape");
    for (int a : support[j])
      if (a < 0 || a >= total_tx) throw std::invalid_argument("PrecoderCovariance: support index out of range");
    if (n > 0 && linalg::min_eigenvalue(blocks[j]) < -tolerance)
      throw std::invalid_argument("PrecoderCovariance: block " + std::to_string(j) + " is not PSD");
  }
}

void QuantizationProfile::validate() const {
  if (floor < 0.0) throw std::invalid_argument("QuantizationProfile: negative floor");
  for (double v : variances)
    if (!(v >= floor)) throw std::invalid_argument("QuantizationProfile: variance below floor");
}

RMatrix row_selector(const SystemConfig& config, int ru) {
  RMatrix d = RMatrix::Zero(config.total_tx(), config.tx_antennas[ru]);
  d.middleRows(config.tx_offset(ru), config.tx_antennas[ru]).setIdentity();
  return d;
}

RMatrix column_selector(const SystemConfig& config, int ms) {
  RMatrix d = RMatrix::Zero(config.total_rx(), config.rx_antennas[ms]);
  d.middleRows(config.rx_offset(ms), config.rx_antennas[ms]).setIdentity();
  return d;
}

RMatrix embedding_matrix(const std::vector<int>& support, int total_tx) {
  RMatrix e = RMatrix::Zero(total_tx, static_cast<Eigen::Index>(support.size()));
  for (std::size_t c = 0; c < support.size(); ++c) e(support[c], static_cast<Eigen::Index>(c)) = 1.0;
  return e;
}

std::vector<int> antennas_of(const SystemConfig& config, const std::vector<int>& rus) {
  std::vector<int> out;
  for (int i : rus) {
    const int off = config.tx_offset(i);
    for (int a = 0; a < config.tx_antennas[i]; ++a) out.push_back(off + a);
  }
  return out;
}

CMatrix quantization_covariance(const SystemConfig& config, const QuantizationProfile& q) {
  if (static_cast<int>(q.variances.size()) != config.num_rus)
    throw std::invalid_argument("quantization_covariance: one variance per RU required");
  CMatrix omega = CMatrix::Zero(config.total_tx(), config.total_tx());
  int off = 0;
  for (int i = 0; i < config.num_rus; ++i) {
    for (int a = 0; a < config.tx_antennas[i]; ++a) omega(off + a, off + a) = q.variances[i];
    off += config.tx_antennas[i];
  }
  return omega;
}

CMatrix ru_block(const SystemConfig& config, const CMatrix& m, int ru) {
  const int off = config.tx_offset(ru);
  const int n = config.tx_antennas[ru];
  return m.block(off, off, n, n);
}

double linearize_logdet(const CMatrix& a, const CMatrix& b) {
  Eigen::LLT<CMatrix> llt(a);
  const auto logdet = linalg::try_log2_det(a);
  if (llt.info() != Eigen::Success || !logdet || linalg::min_eigenvalue(a) <= 1e-12)
    throw std::domain_error("linearize_logdet: expansion point is not positive definite");
  const CMatrix delta = b - a;
  const Complex tr = llt.solve(delta).trace();
  return *logdet + kInvLn2 * tr.real();
}

namespace {

void check_dims(const SystemConfig& config, const PrecoderCovariance& v) {
  if (v.total_tx != config.total_tx())
    throw std::invalid_argument("covariance dimension does not match the configuration");
  if (v.num_mss() != config.num_mss)
    throw std::invalid_argument("covariance count does not match the number of MSs");
}

double user_rate_from_sums(const CMatrix& hj, const CMatrix& total, const CMatrix& interference) {
  const auto n = hj.rows();
  const CMatrix eye = CMatrix::Identity(n, n);
  const CMatrix s = eye + hj * total * hj.adjoint();
  const CMatrix i = eye + hj * interference * hj.adjoint();
  return linalg::log2_det(linalg::hermitian_part(s)) - linalg::log2_det(linalg::hermitian_part(i));
}

double fronthaul_from_block(const CMatrix& block, double sigma2) {
  const auto n = block.rows();
  const CMatrix a = linalg::hermitian_part(block) + sigma2 * CMatrix::Identity(n, n);
  return linalg::log2_det(a) - static_cast<double>(n) * std::log2(sigma2);
}

}  // namespace

double cap_user_rate(const SystemConfig& config, const ChannelRealization& h,
                     const PrecoderCovariance& v, const QuantizationProfile& q, int ms) {
  check_dims(config, v);
  const CMatrix omega = quantization_covariance(config, q);
  const CMatrix hj = h.ms_channel(ms);
  return user_rate_from_sums(hj, v.sum() + omega, v.sum_except(ms) + omega);
}

std::vector<double> cap_user_rates(const SystemConfig& config, const ChannelRealization& h,
                                   const PrecoderCovariance& v, const QuantizationProfile& q) {
  check_dims(config, v);
  const CMatrix total = v.sum() + quantization_covariance(config, q);
  std::vector<double> rates(config.num_mss);
  for (int j = 0; j < config.num_mss; ++j) {
    const CMatrix hj = h.ms_channel(j);
    rates[j] = user_rate_from_sums(hj, total, total - v.embedded(j));
  }
  return rates;
}

double weighted_sum_rate(const SystemConfig& config, const ChannelRealization& h,
                         const PrecoderCovariance& v, const QuantizationProfile& q) {
  const auto rates = cap_user_rates(config, h, v, q);
  double acc = 0.0;
  for (int j = 0; j < config.num_mss; ++j) acc += config.rate_weights[j] * rates[j];
  return acc;
}

double cap_fronthaul_rate(const SystemConfig& config, const PrecoderCovariance& v, double sigma2,
                          int ru, double floor) {
  check_dims(config, v);
  if (!(sigma2 >= floor) || !(sigma2 > 0.0))
    throw std::invalid_argument("cap_fronthaul_rate: quantization variance below floor");
  return fronthaul_from_block(ru_block(config, v.sum(), ru), sigma2);
}

double transmit_power(const SystemConfig& config, const PrecoderCovariance& v, double sigma2, int ru) {
  check_dims(config, v);
  return ru_block(config, v.sum(), ru).trace().real() + config.tx_antennas[ru] * sigma2;
}

double cap_rate_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                          const PrecoderCovariance& v, const QuantizationProfile& q, int ms) {
  check_dims(config, v);
  check_dims(config, point.covariance);
  if (point.quantization.variances.size() != q.variances.size())
    throw std::invalid_argument("cap_rate_surrogate: quantization snapshot mismatch");
  const CMatrix hj = point.channel.ms_channel(ms);
  const auto n = hj.rows();
  const CMatrix eye = CMatrix::Identity(n, n);
  const CMatrix omega = quantization_covariance(config, q);
  const CMatrix omega0 = quantization_covariance(config, point.quantization);
  const CMatrix s = eye + hj * (v.sum() + omega) * hj.adjoint();
  const CMatrix a = eye + hj * (point.covariance.sum_except(ms) + omega0) * hj.adjoint();
  const CMatrix b = eye + hj * (v.sum_except(ms) + omega) * hj.adjoint();
  return linalg::log2_det(linalg::hermitian_part(s)) -
         linearize_logdet(linalg::hermitian_part(a), linalg::hermitian_part(b));
}

double cap_fronthaul_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                               const PrecoderCovariance& v, double sigma2, int ru, double floor) {
  check_dims(config, v);
  const double sigma0 = point.quantization.variances.at(ru);
  if (!(sigma2 >= floor) || !(sigma0 >= floor) || !(sigma2 > 0.0) || !(sigma0 > 0.0))
    throw std::invalid_argument("cap_fronthaul_surrogate: quantization variance below floor");
  const int n = config.tx_antennas[ru];
  const CMatrix eye = CMatrix::Identity(n, n);
  const CMatrix a = linalg::hermitian_part(ru_block(config, point.covariance.sum(), ru)) + sigma0 * eye;
  const CMatrix b = linalg::hermitian_part(ru_block(config, v.sum(), ru)) + sigma2 * eye;
  return linearize_logdet(a, b) - n * std::log2(sigma2);
}

double cbp_user_rate(const SystemConfig& config, const ChannelRealization& h,
                     const PrecoderCovariance& vt, const QuantizationProfile& q, int ms) {
  return cap_user_rate(config, h, vt, q, ms);
}

double cbp_rate_surrogate(const SystemConfig& config, const SurrogateExpansionPoint& point,
                          const PrecoderCovariance& vt, const QuantizationProfile& q, int ms) {
  return cap_rate_surrogate(config, point, vt, q, ms);
}

double cbp_precoder_fronthaul_rate(const SystemConfig& config, const PrecoderCovariance& vt,
                                   double sigma2, int ru, int coherence, double floor) {
  if (coherence < 1) throw std::invalid_argument("cbp_precoder_fronthaul_rate: coherence must be >= 1");
  return cap_fronthaul_rate(config, vt, sigma2, ru, floor) / static_cast<double>(coherence);
}

}  // namespace cran
