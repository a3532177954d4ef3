#include "cran/geometry_channel.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss.hpp>

namespace cran {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("SystemConfig: " + what);
}

std::vector<int> prefix_offsets(const std::vector<int>& sizes) {
  std::vector<int> off(sizes.size() + 1, 0);
  std::partial_sum(sizes.begin(), sizes.end(), off.begin() + 1);
  return off;
}

}  // namespace

SystemConfig SystemConfig::uniform(int num_rus, int num_mss, int tx_per_ru, int rx_per_ms,
                                   double fronthaul, double power, int coherence) {
  SystemConfig c;
  c.num_rus = num_rus;
  c.num_mss = num_mss;
  c.tx_antennas.assign(num_rus, tx_per_ru);
  c.rx_antennas.assign(num_mss, rx_per_ms);
  c.streams.assign(num_mss, rx_per_ms);
  c.coherence_length = coherence;
  c.fronthaul_capacity.assign(num_rus, fronthaul);
  c.power_budget.assign(num_rus, power);
  c.rate_weights.assign(num_mss, 1.0);
  return c;
}

int SystemConfig::total_tx() const { return std::accumulate(tx_antennas.begin(), tx_antennas.end(), 0); }
int SystemConfig::total_rx() const { return std::accumulate(rx_antennas.begin(), rx_antennas.end(), 0); }
int SystemConfig::total_streams() const { return std::accumulate(streams.begin(), streams.end(), 0); }

int SystemConfig::tx_offset(int ru) const {
  return std::accumulate(tx_antennas.begin(), tx_antennas.begin() + ru, 0);
}

int SystemConfig::rx_offset(int ms) const {
  return std::accumulate(rx_antennas.begin(), rx_antennas.begin() + ms, 0);
}

void SystemConfig::validate() const {
  require(num_rus >= 1, "num_rus must be >= 1");
  require(num_mss >= 1, "num_mss must be >= 1");
  require(static_cast<int>(tx_antennas.size()) == num_rus, "tx_antennas length != num_rus");
  require(static_cast<int>(fronthaul_capacity.size()) == num_rus, "fronthaul_capacity length != num_rus");
  require(static_cast<int>(power_budget.size()) == num_rus, "power_budget length != num_rus");
  require(static_cast<int>(rx_antennas.size()) == num_mss, "rx_antennas length != num_mss");
  require(static_cast<int>(streams.size()) == num_mss, "streams length != num_mss");
  require(static_cast<int>(rate_weights.size()) == num_mss, "rate_weights length != num_mss");
  require(coherence_length >= 1, "coherence_length must be >= 1");
  for (int i = 0; i < num_rus; ++i) {
    require(tx_antennas[i] >= 1, "tx_antennas must be >= 1");
    // zero capacity is admitted: the RU is silent
    require(fronthaul_capacity[i] >= 0.0 && std::isfinite(fronthaul_capacity[i]),
            "fronthaul_capacity must be finite and >= 0");
    require(power_budget[i] > 0.0 && std::isfinite(power_budget[i]), "power_budget must be > 0");
  }
  for (int j = 0; j < num_mss; ++j) {
    require(rx_antennas[j] >= 1, "rx_antennas must be >= 1");
    require(streams[j] >= 1 && streams[j] <= rx_antennas[j], "streams must lie in [1, rx_antennas]");
    require(rate_weights[j] >= 0.0 && std::isfinite(rate_weights[j]), "rate_weights must be >= 0");
  }
  require(total_streams() <= total_tx(), "total streams exceed total transmit antennas");
  require(area_side > 0.0, "area_side must be > 0");
  require(ref_distance > 0.0, "ref_distance must be > 0");
  require(pathloss_exponent > 0.0, "pathloss_exponent must be > 0");
  require(scattering_radius > 0.0, "scattering_radius must be > 0");
}

double ChannelStatistics::mean_square_norm(int ms, int ru) const {
  const auto& l = link(ms, ru);
  return l.rx_correlation.trace().real() * l.tx_correlation.trace().real();
}

ChannelRealization::ChannelRealization(std::vector<int> rx_antennas, std::vector<int> tx_antennas)
    : rx_(std::move(rx_antennas)), tx_(std::move(tx_antennas)) {
  row_off_ = prefix_offsets(rx_);
  col_off_ = prefix_offsets(tx_);
  h_ = CMatrix::Zero(row_off_.back(), col_off_.back());
}

ChannelRealization::ChannelRealization(std::vector<int> rx_antennas, std::vector<int> tx_antennas,
                                       CMatrix stacked)
    : ChannelRealization(std::move(rx_antennas), std::move(tx_antennas)) {
  if (stacked.rows() != h_.rows() || stacked.cols() != h_.cols())
    throw std::invalid_argument("ChannelRealization: stacked matrix has wrong shape");
  h_ = std::move(stacked);
}

CMatrix ChannelRealization::block(int ms, int ru) const {
  return h_.block(row_off_[ms], col_off_[ru], rx_[ms], tx_[ru]);
}

void ChannelRealization::set_block(int ms, int ru, const CMatrix& value) {
  if (value.rows() != rx_[ms] || value.cols() != tx_[ru])
    throw std::invalid_argument("ChannelRealization::set_block: wrong block shape");
  h_.block(row_off_[ms], col_off_[ru], rx_[ms], tx_[ru]) = value;
}

CMatrix ChannelRealization::ms_channel(int ms) const {
  return h_.middleRows(row_off_[ms], rx_[ms]);
}

NetworkGeometry place_nodes(const SystemConfig& config, std::uint64_t seed) {
  if (!(config.area_side > 0.0)) throw std::invalid_argument("place_nodes: area_side must be > 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, config.area_side);
  NetworkGeometry g;
  g.rus.resize(config.num_rus);
  g.mss.resize(config.num_mss);
  for (auto& p : g.rus) {
    p.x = u(rng);
    p.y = u(rng);
  }
  for (auto& p : g.mss) {
    p.x = u(rng);
    p.y = u(rng);
  }
  return g;
}

double path_loss(double distance, double ref_distance, double exponent) {
  if (!(ref_distance > 0.0)) throw std::invalid_argument("path_loss: reference distance must be > 0");
  if (distance < 0.0) throw std::invalid_argument("path_loss: distance must be >= 0");
  return 1.0 / (1.0 + std::pow(distance / ref_distance, exponent));
}

CMatrix one_ring_covariance_unprojected(double theta, double delta, double alpha, int n_ant) {
  if (!(delta > 0.0)) throw std::invalid_argument("one_ring_covariance: spread must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("one_ring_covariance: alpha must lie in (0, 1]");
  if (n_ant < 1) throw std::invalid_argument("one_ring_covariance: n_ant must be >= 1");

  using Rule = boost::math::quadrature::gauss<double, 201>;
  CMatrix s(n_ant, n_ant);
  const double scale = alpha / (2.0 * delta);
  // entries depend only on m - n; compute one value per lag
  std::vector<Complex> lag(n_ant);
  for (int k = 0; k < n_ant; ++k) {
    const double w = std::numbers::pi * k;
    const double re = Rule::integrate([&](double phi) { return std::cos(w * std::sin(phi)); },
                                      theta - delta, theta + delta);
    const double im = Rule::integrate([&](double phi) { return -std::sin(w * std::sin(phi)); },
                                      theta - delta, theta + delta);
    lag[k] = scale * Complex(re, im);
  }
  for (int m = 0; m < n_ant; ++m) {
    for (int n = 0; n < n_ant; ++n) {
      s(m, n) = m >= n ? lag[m - n] : std::conj(lag[n - m]);
    }
  }
  return s;
}

CMatrix one_ring_covariance(double theta, double delta, double alpha, int n_ant) {
  return linalg::hermitian_part(linalg::clamp_psd(one_ring_covariance_unprojected(theta, delta, alpha, n_ant)));
}

ChannelStatistics build_statistics(const NetworkGeometry& geometry, const SystemConfig& config) {
  if (static_cast<int>(geometry.rus.size()) != config.num_rus ||
      static_cast<int>(geometry.mss.size()) != config.num_mss)
    throw std::invalid_argument("build_statistics: geometry does not match config");
  ChannelStatistics st;
  st.num_rus = config.num_rus;
  st.num_mss = config.num_mss;
  st.links.resize(static_cast<std::size_t>(config.num_rus) * config.num_mss);
  for (int j = 0; j < config.num_mss; ++j) {
    for (int i = 0; i < config.num_rus; ++i) {
      auto& l = st.link(j, i);
      const double dx = geometry.mss[j].x - geometry.rus[i].x;
      const double dy = geometry.mss[j].y - geometry.rus[i].y;
      l.distance = std::hypot(dx, dy);
      if (l.distance > 0.0) {
        l.pathloss = path_loss(l.distance, config.ref_distance, config.pathloss_exponent);
        l.spread = std::atan(config.scattering_radius / l.distance);
        l.angle = std::atan2(dy, dx);
      } else {
        l.pathloss = 1.0;
        l.spread = std::numbers::pi / 2.0;
        l.angle = 0.0;
      }
      l.tx_correlation = one_ring_covariance(l.angle, l.spread, l.pathloss, config.tx_antennas[i]);
      l.rx_correlation = CMatrix::Identity(config.rx_antennas[j], config.rx_antennas[j]);
    }
  }
  return st;
}

Complex complex_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

ChannelSampler::ChannelSampler(const ChannelStatistics& stats)
    : num_rus_(stats.num_rus), num_mss_(stats.num_mss) {
  rx_.resize(num_mss_);
  tx_.resize(num_rus_);
  for (int j = 0; j < num_mss_; ++j) rx_[j] = static_cast<int>(stats.link(j, 0).rx_correlation.rows());
  for (int i = 0; i < num_rus_; ++i) tx_[i] = static_cast<int>(stats.link(0, i).tx_correlation.rows());
  rx_sqrt_.reserve(stats.links.size());
  tx_sqrt_.reserve(stats.links.size());
  for (const auto& l : stats.links) {
    rx_sqrt_.push_back(linalg::psd_sqrt(l.rx_correlation));
    tx_sqrt_.push_back(linalg::psd_sqrt(l.tx_correlation));
  }
}

ChannelRealization ChannelSampler::operator()(Rng& rng) const {
  ChannelRealization h(rx_, tx_);
  for (int j = 0; j < num_mss_; ++j) {
    for (int i = 0; i < num_rus_; ++i) {
      CMatrix g(rx_[j], tx_[i]);
      for (int c = 0; c < tx_[i]; ++c)
        for (int r = 0; r < rx_[j]; ++r) g(r, c) = complex_normal(rng);
      const std::size_t k = static_cast<std::size_t>(j) * num_rus_ + i;
      h.set_block(j, i, rx_sqrt_[k] * g * tx_sqrt_[k]);
    }
  }
  return h;
}

ChannelRealization sample_channel(const ChannelStatistics& stats, Rng& rng) {
  return ChannelSampler(stats)(rng);
}

}  // namespace cran
