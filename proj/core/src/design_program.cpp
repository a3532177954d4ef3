#include "design_program.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cran::detail {

void declare_variables(convex::ConvexProgram& program, const VariableMap& map) {
  int psd = 0;
  int scalar = 0;
  int rate = 0;
  for (std::size_t j = 0; j < map.cov_var.size(); ++j) {
    if (map.cov_var[j] < 0) continue;
    if (map.cov_var[j] != psd++) throw std::logic_error("VariableMap: PSD variables out of order");
    program.add_psd(static_cast<int>(map.support[j].size()), "V" + std::to_string(j));
  }
  for (std::size_t i = 0; i < map.sigma_var.size(); ++i) {
    if (map.sigma_var[i] < 0) continue;
    if (map.sigma_var[i] != scalar++) throw std::logic_error("VariableMap: scalar variables out of order");
    program.add_scalar(map.sigma_floor, "sigma" + std::to_string(i));
  }
  for (std::size_t j = 0; j < map.rate_var.size(); ++j) {
    if (map.rate_var[j] < 0) continue;
    if (map.rate_var[j] != rate++) throw std::logic_error("VariableMap: rate variables out of order");
    program.add_rate("R" + std::to_string(j), kRateFloor);
  }
}

PrecoderCovariance covariance_of(const VariableMap& map, const convex::Solution& x) {
  PrecoderCovariance v = PrecoderCovariance::clustered(map.support, map.total_tx);
  for (std::size_t j = 0; j < map.cov_var.size(); ++j)
    if (map.cov_var[j] >= 0) v.blocks[j] = linalg::hermitian_part(x.psd_values[map.cov_var[j]]);
  return v;
}

QuantizationProfile quantization_of(const VariableMap& map, const convex::Solution& x, double floor) {
  QuantizationProfile q;
  q.floor = floor;
  q.variances = map.sigma_fixed;
  for (std::size_t i = 0; i < map.sigma_var.size(); ++i)
    if (map.sigma_var[i] >= 0) q.variances[i] = x.scalar_values[map.sigma_var[i]];
  return q;
}

std::vector<double> rates_of(const VariableMap& map, const convex::Solution& x) {
  std::vector<double> r(map.rate_var.size(), 0.0);
  for (std::size_t j = 0; j < map.rate_var.size(); ++j)
    if (map.rate_var[j] >= 0) r[j] = std::max(0.0, x.rate_values[map.rate_var[j]]);
  return r;
}

convex::Solution point_of(const VariableMap& map, const PrecoderCovariance& v, const QuantizationProfile& q,
                          const std::vector<double>& rates) {
  convex::Solution s;
  for (std::size_t j = 0; j < map.cov_var.size(); ++j)
    if (map.cov_var[j] >= 0) s.psd_values.push_back(v.blocks[j]);
  for (std::size_t i = 0; i < map.sigma_var.size(); ++i)
    if (map.sigma_var[i] >= 0) s.scalar_values.push_back(q.variances[i]);
  for (std::size_t j = 0; j < map.rate_var.size(); ++j)
    if (map.rate_var[j] >= 0) s.rate_values.push_back(rates.at(j));
  return s;
}

CMatrix LogdetArgument::evaluate(const convex::Solution& x) const {
  CMatrix s = base;
  for (const auto& [v, g] : psd_maps) s.noalias() += g * x.psd_values[v] * g.adjoint();
  for (const auto& [v, f] : scalar_maps) s += x.scalar_values[v] * f;
  return linalg::hermitian_part(s);
}

convex::LogDetAtom LogdetArgument::atom(double weight) const {
  convex::LogDetAtom a;
  a.weight = weight;
  a.base = base;
  a.psd_maps = psd_maps;
  a.scalar_maps = scalar_maps;
  return a;
}

convex::AffineForm LogdetArgument::tangent(const CMatrix& a, double scale) const {
  Eigen::LLT<CMatrix> llt(a);
  const auto logdet = linalg::try_log2_det(a);
  if (llt.info() != Eigen::Success || !logdet)
    throw std::domain_error("tangent: expansion point is not positive definite");
  const auto m = a.rows();
  convex::AffineForm out;
  const double c = scale * kInvLn2;
  out.constant = scale * *logdet + c * (llt.solve(base).trace().real() - static_cast<double>(m));
  for (const auto& [v, g] : psd_maps) out.add_psd(v, g.adjoint() * llt.solve(g), c);
  for (const auto& [v, f] : scalar_maps) out.add_scalar(v, c * llt.solve(f).trace().real());
  return out;
}

LogdetArgument rate_argument(const VariableMap& map, const SystemConfig& config, const ChannelRealization& h,
                             int ms, bool include_self) {
  const CMatrix hj = h.ms_channel(ms);
  const auto n = hj.rows();
  LogdetArgument arg;
  arg.base = CMatrix::Identity(n, n);
  for (std::size_t k = 0; k < map.cov_var.size(); ++k) {
    if (map.cov_var[k] < 0) continue;
    if (!include_self && static_cast<int>(k) == ms) continue;
    const auto& s = map.support[k];
    CMatrix g(n, static_cast<Eigen::Index>(s.size()));
    for (std::size_t c = 0; c < s.size(); ++c) g.col(static_cast<Eigen::Index>(c)) = hj.col(s[c]);
    arg.psd_maps.emplace_back(map.cov_var[k], std::move(g));
  }
  for (int i = 0; i < config.num_rus; ++i) {
    const CMatrix hji = h.block(ms, i);
    const CMatrix f = hji * hji.adjoint();
    if (map.sigma_var[i] >= 0)
      arg.scalar_maps.emplace_back(map.sigma_var[i], f);
    else if (map.sigma_fixed[i] != 0.0)
      arg.base += map.sigma_fixed[i] * f;
  }
  arg.base = linalg::hermitian_part(arg.base);
  return arg;
}

LogdetArgument fronthaul_argument(const VariableMap& map, const SystemConfig& config, int ru) {
  const int off = config.tx_offset(ru);
  const int nt = config.tx_antennas[ru];
  LogdetArgument arg;
  arg.base = CMatrix::Zero(nt, nt);
  for (std::size_t k = 0; k < map.cov_var.size(); ++k) {
    if (map.cov_var[k] < 0) continue;
    const auto& s = map.support[k];
    CMatrix g = CMatrix::Zero(nt, static_cast<Eigen::Index>(s.size()));
    bool any = false;
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s[c] >= off && s[c] < off + nt) {
        g(s[c] - off, static_cast<Eigen::Index>(c)) = 1.0;
        any = true;
      }
    }
    if (any) arg.psd_maps.emplace_back(map.cov_var[k], std::move(g));
  }
  if (map.sigma_var[ru] >= 0)
    arg.scalar_maps.emplace_back(map.sigma_var[ru], CMatrix::Identity(nt, nt));
  else
    arg.base += map.sigma_fixed[ru] * CMatrix::Identity(nt, nt);
  return arg;
}

convex::AffineForm power_form(const VariableMap& map, const SystemConfig& config, int ru) {
  const int off = config.tx_offset(ru);
  const int nt = config.tx_antennas[ru];
  convex::AffineForm out;
  for (std::size_t k = 0; k < map.cov_var.size(); ++k) {
    if (map.cov_var[k] < 0) continue;
    const auto& s = map.support[k];
    const auto d = static_cast<Eigen::Index>(s.size());
    CMatrix sel = CMatrix::Zero(d, d);
    bool any = false;
    for (Eigen::Index c = 0; c < d; ++c) {
      if (s[c] >= off && s[c] < off + nt) {
        sel(c, c) = 1.0;
        any = true;
      }
    }
    if (any) out.add_psd(map.cov_var[k], sel);
  }
  if (map.sigma_var[ru] >= 0)
    out.add_scalar(map.sigma_var[ru], nt);
  else
    out.constant += nt * map.sigma_fixed[ru];
  return out;
}

double quantization_for_rate(const CMatrix& block, double bits, double floor) {
  const auto n = block.rows();
  const CMatrix b = linalg::hermitian_part(block);
  auto rate = [&](double s) {
    return linalg::log2_det(b + s * CMatrix::Identity(n, n)) - static_cast<double>(n) * std::log2(s);
  };
  // stay strictly above the floor so the point is interior
  if (rate(2.0 * floor) <= bits) return 2.0 * floor;
  double hi = std::max(1.0, b.trace().real());
  while (rate(hi) > bits) hi *= 2.0;
  // rate is decreasing in sigma^2; find the crossing
  double lo = 2.0 * floor;
  for (int it = 0; it < 400 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid) > bits)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

namespace {
constexpr double kCheckpointBarrier = 1e2;
}

SequentialSolver::SequentialSolver(convex::SolveOptions options) : options_(std::move(options)) {
  options_.checkpoint_barrier = std::max(kCheckpointBarrier, options_.initial_barrier);
}

convex::Solution SequentialSolver::solve(const convex::ConvexProgram& program, const convex::Solution& incumbent,
                                         const std::string& context) {
  convex::Solution s;
  bool done = false;
  if (checkpoint_) {
    convex::SolveOptions o = options_;
    o.initial_barrier = checkpoint_barrier_;
    o.adapt_warm_barrier = false;
    // only worth it if the old centre is still strictly inside
    if (convex::max_violation(program, *checkpoint_) < 0.0) {
      s = convex::solve(program, *checkpoint_, o);
      done = s.status != convex::SolveStatus::Infeasible;
    }
  }
  if (!done) s = convex::solve(program, incumbent, options_);
  if (s.status == convex::SolveStatus::Infeasible)
    throw std::runtime_error(context + ": inner convex problem reported infeasible");
  checkpoint_ = s.checkpoint;
  checkpoint_barrier_ = s.checkpoint_barrier;
  if (convex::max_violation(program, incumbent) <= 1e-9) {
    const double inc = convex::evaluate_objective(program, incumbent);
    if (inc > s.objective_value) {
      convex::Solution keep = incumbent;
      keep.objective_value = inc;
      keep.status = s.status;
      keep.kkt_residual = s.kkt_residual;
      keep.newton_steps = s.newton_steps;
      return keep;
    }
  }
  return s;
}

}  // namespace cran::detail
