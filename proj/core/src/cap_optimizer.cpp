#include "cran/cap_optimizer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "design_program.hpp"

namespace cran {

void SsumOptions::validate() const {
  if (outer_iterations < 1 || inner_max < 1 || inner_min < 1 || mm_max_iterations < 1)
    throw std::invalid_argument("SsumOptions: iteration counts must be >= 1");
  if (inner_min > inner_max) throw std::invalid_argument("SsumOptions: inner_min exceeds inner_max");
  if (!(inner_tolerance > 0.0)) throw std::invalid_argument("SsumOptions: inner_tolerance must be > 0");
}

std::vector<double> cap_fronthaul_loads(const SystemConfig& config, const PrecoderCovariance& v,
                                        const QuantizationProfile& q) {
  std::vector<double> out(config.num_rus);
  for (int i = 0; i < config.num_rus; ++i) out[i] = cap_fronthaul_rate(config, v, q.variances[i], i, q.floor);
  return out;
}

std::vector<double> cap_powers(const SystemConfig& config, const PrecoderCovariance& v,
                               const QuantizationProfile& q) {
  std::vector<double> out(config.num_rus);
  for (int i = 0; i < config.num_rus; ++i) out[i] = transmit_power(config, v, q.variances[i], i);
  return out;
}

namespace {

using detail::VariableMap;

bool is_dark(const SystemConfig& config, int ru) { return config.fronthaul_capacity[ru] <= detail::kDarkCapacity; }

VariableMap cap_map(const SystemConfig& config) {
  VariableMap m;
  m.total_tx = config.total_tx();
  m.sigma_floor = kQuantizationFloor;
  std::vector<int> lit;
  for (int i = 0; i < config.num_rus; ++i)
    if (!is_dark(config, i)) lit.push_back(i);
  const auto antennas = antennas_of(config, lit);
  int psd = 0;
  for (int j = 0; j < config.num_mss; ++j) {
    m.support.push_back(antennas);
    m.cov_var.push_back(antennas.empty() ? -1 : psd++);
    m.rate_var.push_back(-1);
  }
  int scalar = 0;
  for (int i = 0; i < config.num_rus; ++i) {
    m.sigma_var.push_back(is_dark(config, i) ? -1 : scalar++);
    m.sigma_fixed.push_back(kQuantizationFloor);
  }
  return m;
}

/// Objective pieces of one channel draw, expanded at a fixed point.
struct DrawTerms {
  ChannelRealization h;
  std::vector<convex::LogDetAtom> atoms;
  convex::AffineForm affine;
};

DrawTerms draw_terms(const SystemConfig& config, const VariableMap& map, const ChannelRealization& h,
                     const convex::Solution& at) {
  DrawTerms t;
  t.h = h;
  for (int j = 0; j < config.num_mss; ++j) {
    const double mu = config.rate_weights[j];
    if (mu <= 0.0) continue;
    const auto full = detail::rate_argument(map, config, h, j, true);
    if (full.psd_maps.empty() && full.scalar_maps.empty()) continue;
    t.atoms.push_back(full.atom(mu));
    const auto interference = detail::rate_argument(map, config, h, j, false);
    t.affine.add(interference.tangent(interference.evaluate(at), 1.0), -mu);
  }
  return t;
}

bool has_variables(const convex::AffineForm& a) { return !a.psd.empty() || !a.scalar.empty() || !a.rate.empty(); }

convex::ConvexProgram cap_program(const SystemConfig& config, const VariableMap& map,
                                  const std::vector<DrawTerms>& draws, const convex::Solution& fronthaul_point) {
  convex::ConvexProgram p;
  detail::declare_variables(p, map);
  const double w = 1.0 / static_cast<double>(draws.size());
  for (const auto& d : draws) {
    for (const auto& a : d.atoms) {
      p.objective_logdets.push_back(a);
      p.objective_logdets.back().weight *= w;
    }
    p.objective_affine.add(d.affine, w);
  }
  for (int i = 0; i < config.num_rus; ++i) {
    if (map.sigma_var[i] < 0) continue;
    const auto arg = detail::fronthaul_argument(map, config, i);
    convex::Constraint c;
    c.label = "fronthaul" + std::to_string(i);
    c.affine = arg.tangent(arg.evaluate(fronthaul_point), 1.0);
    c.neg_logs.push_back({map.sigma_var[i], static_cast<double>(config.tx_antennas[i])});
    c.bound = config.fronthaul_capacity[i];
    p.constraints.push_back(std::move(c));
  }
  for (int i = 0; i < config.num_rus; ++i) {
    convex::Constraint c;
    c.label = "power" + std::to_string(i);
    c.affine = detail::power_form(map, config, i);
    c.bound = config.power_budget[i];
    if (!has_variables(c.affine)) continue;
    p.constraints.push_back(std::move(c));
  }
  return p;
}

double average_objective(const SystemConfig& config, const std::vector<DrawTerms>& draws,
                         const PrecoderCovariance& v, const QuantizationProfile& q) {
  double acc = 0.0;
  for (const auto& d : draws) acc += weighted_sum_rate(config, d.h, v, q);
  return acc / static_cast<double>(draws.size());
}

IterationRecord make_record(const SystemConfig& config, int outer, int inner, double surrogate, double objective,
                            const PrecoderCovariance& v, const QuantizationProfile& q, int steps) {
  IterationRecord r;
  r.outer = outer;
  r.inner = inner;
  r.surrogate_objective = surrogate;
  r.objective = objective;
  r.fronthaul_load = cap_fronthaul_loads(config, v, q);
  r.power = cap_powers(config, v, q);
  r.newton_steps = steps;
  return r;
}

bool converged(double prev, double cur, double tol) {
  const double scale = std::max(std::abs(prev), std::abs(cur));
  return std::abs(cur - prev) <= tol * scale;
}

}  // namespace

std::pair<PrecoderCovariance, QuantizationProfile> init_cap(const SystemConfig& config) {
  config.validate();
  const VariableMap map = cap_map(config);
  PrecoderCovariance v = PrecoderCovariance::clustered(map.support, map.total_tx);
  QuantizationProfile q;
  q.floor = kQuantizationFloor;
  q.variances.assign(config.num_rus, kQuantizationFloor);

  // diagonal value per lit antenna, indexed like the support
  const auto& lit = map.support.empty() ? std::vector<int>{} : map.support.front();
  std::vector<double> diag(lit.size(), 0.0);
  const double nm = config.num_mss;
  for (int i = 0; i < config.num_rus; ++i) {
    const int nt = config.tx_antennas[i];
    const double pbar = config.power_budget[i];
    if (nt * kQuantizationFloor >= pbar)
      throw std::invalid_argument("init_cap: power budget of RU " + std::to_string(i) +
                                  " cannot cover the quantization noise floor");
    if (map.sigma_var[i] < 0) continue;
    const double cbar = config.fronthaul_capacity[i];
    const double rho = std::exp2(0.9 * cbar / nt);
    double beta = 0.9 * pbar * (1.0 - 1.0 / rho) / (nt * nm);
    const int off = config.tx_offset(i);
    const CMatrix eye = CMatrix::Identity(nt, nt);
    double sigma2 = kQuantizationFloor;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200) throw std::runtime_error("init_cap: no feasible initialization for RU " + std::to_string(i));
      sigma2 = detail::quantization_for_rate(nm * beta * eye, 0.9 * cbar, kQuantizationFloor);
      const double power = nt * (nm * beta + sigma2);
      const double load = linalg::log2_det(nm * beta * eye + sigma2 * eye) - nt * std::log2(sigma2);
      if (power < pbar && load < cbar && beta > 0.0) break;
      beta *= 0.5;
    }
    q.variances[i] = sigma2;
    for (std::size_t a = 0; a < lit.size(); ++a)
      if (lit[a] >= off && lit[a] < off + nt) diag[a] = beta;
  }
  for (int j = 0; j < config.num_mss; ++j) {
    if (map.cov_var[j] < 0) continue;
    RVector d = Eigen::Map<const RVector>(diag.data(), static_cast<Eigen::Index>(diag.size()));
    v.blocks[j] = d.cast<Complex>().asDiagonal();
  }
  return {std::move(v), std::move(q)};
}

CapSolution optimize_cap_stochastic(const SystemConfig& config, const ChannelStatistics& stats,
                                    const SsumOptions& options) {
  const ChannelSampler sampler(stats);
  return optimize_cap_stochastic(config, ChannelSource([&sampler](Rng& rng) { return sampler(rng); }), options);
}

CapSolution optimize_cap_stochastic(const SystemConfig& config, const ChannelSource& source,
                                    const SsumOptions& options) {
  options.validate();
  auto [v0, q0] = init_cap(config);
  const VariableMap map = cap_map(config);
  CapSolution out;
  out.covariances = v0;
  out.quantization = q0;
  bool any_var = false;
  for (int c : map.cov_var) any_var = any_var || c >= 0;
  Rng rng(options.seed);

  convex::Solution x = detail::point_of(map, v0, q0, {});
  std::vector<DrawTerms> draws;
  detail::SequentialSolver solver(options.solver);
  for (int n = 1; n <= options.outer_iterations; ++n) {
    const ChannelRealization h = source(rng);
    draws.push_back(draw_terms(config, map, h, x));
    out.sample_count = n;
    if (!any_var) {
      const double obj = average_objective(config, draws, out.covariances, out.quantization);
      out.surrogate_objective_trace.push_back(obj);
      out.trace.push_back(make_record(config, n, 1, obj, obj, out.covariances, out.quantization, 0));
      continue;
    }
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int r = 1; r <= options.inner_max; ++r) {
      const auto program = cap_program(config, map, draws, x);
      const auto sol = solver.solve(program, x, "optimize_cap_stochastic (outer " + std::to_string(n) + ", inner " +
                                          std::to_string(r) + ")");
      x.psd_values = sol.psd_values;
      x.scalar_values = sol.scalar_values;
      const auto v = detail::covariance_of(map, x);
      const auto q = detail::quantization_of(map, x, kQuantizationFloor);
      out.surrogate_objective_trace.push_back(sol.objective_value);
      out.trace.push_back(make_record(config, n, r, sol.objective_value, average_objective(config, draws, v, q), v,
                                      q, sol.newton_steps));
      const bool done = r >= options.inner_min && std::isfinite(prev) &&
                        converged(prev, sol.objective_value, options.inner_tolerance);
      prev = sol.objective_value;
      if (done) break;
    }
  }
  out.covariances = detail::covariance_of(map, x);
  out.quantization = detail::quantization_of(map, x, kQuantizationFloor);
  if (!any_var) out.quantization = q0;
  return out;
}

CapSolution optimize_cap_perfect(const SystemConfig& config, const ChannelRealization& h,
                                 const SsumOptions& options) {
  options.validate();
  auto [v0, q0] = init_cap(config);
  const VariableMap map = cap_map(config);
  CapSolution out;
  out.covariances = v0;
  out.quantization = q0;
  out.sample_count = 1;
  bool any_var = false;
  for (int c : map.cov_var) any_var = any_var || c >= 0;
  if (!any_var) {
    const double obj = weighted_sum_rate(config, h, v0, q0);
    out.surrogate_objective_trace.push_back(obj);
    out.trace.push_back(make_record(config, 0, 0, obj, obj, v0, q0, 0));
    return out;
  }

  convex::Solution x = detail::point_of(map, v0, q0, {});
  double prev = weighted_sum_rate(config, h, v0, q0);
  out.trace.push_back(make_record(config, 0, 0, prev, prev, v0, q0, 0));
  out.surrogate_objective_trace.push_back(prev);
  detail::SequentialSolver solver(options.solver);
  for (int it = 1; it <= options.mm_max_iterations; ++it) {
    const std::vector<DrawTerms> draws{draw_terms(config, map, h, x)};
    const auto program = cap_program(config, map, draws, x);
    const auto sol =
        solver.solve(program, x, "optimize_cap_perfect (iteration " + std::to_string(it) + ")");
    x.psd_values = sol.psd_values;
    x.scalar_values = sol.scalar_values;
    const auto v = detail::covariance_of(map, x);
    const auto q = detail::quantization_of(map, x, kQuantizationFloor);
    const double obj = weighted_sum_rate(config, h, v, q);
    out.surrogate_objective_trace.push_back(sol.objective_value);
    out.trace.push_back(make_record(config, 0, it, sol.objective_value, obj, v, q, sol.newton_steps));
    const bool done = converged(prev, obj, options.inner_tolerance);
    prev = obj;
    if (done) break;
  }
  out.covariances = detail::covariance_of(map, x);
  out.quantization = detail::quantization_of(map, x, kQuantizationFloor);
  return out;
}

}  // namespace cran
