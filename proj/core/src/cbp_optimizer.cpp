#include "cran/cbp_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "design_program.hpp"

namespace cran {

void ClusterAssignment::validate() const {
  const int nm = num_mss();
  const int expect = std::min(cluster_size, nm);
  if (cluster_size < 1) throw std::invalid_argument("ClusterAssignment: cluster size must be >= 1");
  for (int i = 0; i < num_rus(); ++i) {
    if (static_cast<int>(served_mss[i].size()) != expect)
      throw std::invalid_argument("ClusterAssignment: RU " + std::to_string(i) + " serves the wrong number of MSs");
    for (int j : served_mss[i]) {
      if (j < 0 || j >= nm) throw std::invalid_argument("ClusterAssignment: MS index out of range");
      const auto& b = serving_rus[j];
      if (std::find(b.begin(), b.end(), i) == b.end())
        throw std::invalid_argument("ClusterAssignment: served/serving sets disagree");
    }
  }
  for (int j = 0; j < nm; ++j) {
    for (int i : serving_rus[j]) {
      if (i < 0 || i >= num_rus()) throw std::invalid_argument("ClusterAssignment: RU index out of range");
      const auto& m = served_mss[i];
      if (std::find(m.begin(), m.end(), j) == m.end())
        throw std::invalid_argument("ClusterAssignment: served/serving sets disagree");
    }
  }
}

ClusterAssignment assign_clusters(const std::vector<std::vector<double>>& score, int cluster_size) {
  if (cluster_size < 1) throw std::invalid_argument("assign_clusters: cluster size must be >= 1");
  ClusterAssignment c;
  c.cluster_size = cluster_size;
  const int nr = static_cast<int>(score.size());
  const int nm = nr > 0 ? static_cast<int>(score.front().size()) : 0;
  c.served_mss.resize(nr);
  c.serving_rus.resize(nm);
  for (int i = 0; i < nr; ++i) {
    if (static_cast<int>(score[i].size()) != nm) throw std::invalid_argument("assign_clusters: ragged score table");
    std::vector<int> order(nm);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[i][a] > score[i][b]; });
    order.resize(std::min(cluster_size, nm));
    std::sort(order.begin(), order.end());
    c.served_mss[i] = order;
    for (int j : order) c.serving_rus[j].push_back(i);
  }
  return c;
}

ClusterAssignment assign_clusters_instantaneous(const ChannelRealization& h, int cluster_size) {
  std::vector<std::vector<double>> score(h.num_rus(), std::vector<double>(h.num_mss()));
  for (int i = 0; i < h.num_rus(); ++i)
    for (int j = 0; j < h.num_mss(); ++j) score[i][j] = h.block(j, i).norm();
  return assign_clusters(score, cluster_size);
}

ClusterAssignment assign_clusters_stochastic(const ChannelStatistics& stats, int cluster_size) {
  std::vector<std::vector<double>> score(stats.num_rus, std::vector<double>(stats.num_mss));
  for (int i = 0; i < stats.num_rus; ++i)
    for (int j = 0; j < stats.num_mss; ++j) score[i][j] = stats.mean_square_norm(j, i);
  return assign_clusters(score, cluster_size);
}

std::vector<int> unserved_mss(const ClusterAssignment& clusters, const SystemConfig& config) {
  std::vector<int> out;
  for (int j = 0; j < clusters.num_mss(); ++j)
    if (config.rate_weights[j] > 0.0 && clusters.serving_rus[j].empty()) out.push_back(j);
  return out;
}

std::vector<double> cbp_fronthaul_loads(const SystemConfig& config, const ClusterAssignment& clusters,
                                        const PrecoderCovariance& v, const QuantizationProfile& q,
                                        const std::vector<double>& rates, std::optional<int> coherence) {
  std::vector<double> out(config.num_rus, 0.0);
  for (int i = 0; i < config.num_rus; ++i) {
    for (int j : clusters.served_mss[i]) out[i] += rates[j];
    if (coherence) out[i] += cbp_precoder_fronthaul_rate(config, v, q.variances[i], i, *coherence, q.floor);
  }
  return out;
}

namespace {

using detail::VariableMap;

bool is_dark(const SystemConfig& config, int ru) { return config.fronthaul_capacity[ru] <= detail::kDarkCapacity; }

void check_clusters(const SystemConfig& config, const ClusterAssignment& clusters) {
  config.validate();
  if (clusters.num_rus() != config.num_rus || clusters.num_mss() != config.num_mss)
    throw std::invalid_argument("CBP: cluster assignment does not match the configuration");
  clusters.validate();
}

/// Supports are the antennas of the lit serving RUs; MSs with none are
/// unserved and get no variables. `quantized` adds sigma_w variables for
/// RUs that carry a precoder.
VariableMap cbp_map(const SystemConfig& config, const ClusterAssignment& clusters, bool quantized,
                    std::optional<double> forced) {
  VariableMap m;
  m.total_tx = config.total_tx();
  m.sigma_floor = kQuantizationFloor;
  int psd = 0;
  int rate = 0;
  std::vector<bool> carries(config.num_rus, false);
  for (int j = 0; j < config.num_mss; ++j) {
    // an MS fed through a zero-capacity RU can only get rate zero
    const auto& b = clusters.serving_rus[j];
    const bool served = !b.empty() && std::none_of(b.begin(), b.end(), [&](int i) { return is_dark(config, i); });
    std::vector<int> lit = served ? b : std::vector<int>{};
    m.support.push_back(antennas_of(config, lit));
    m.cov_var.push_back(served ? psd++ : -1);
    m.rate_var.push_back(served ? rate++ : -1);
    for (int i : lit) carries[i] = true;
  }
  int scalar = 0;
  for (int i = 0; i < config.num_rus; ++i) {
    if (!quantized) {
      m.sigma_var.push_back(-1);
      m.sigma_fixed.push_back(0.0);
    } else if (carries[i] && !forced) {
      m.sigma_var.push_back(scalar++);
      m.sigma_fixed.push_back(kQuantizationFloor);
    } else {
      m.sigma_var.push_back(-1);
      m.sigma_fixed.push_back(carries[i] && forced ? *forced : kQuantizationFloor);
    }
  }
  return m;
}

/// Number of served MSs in M_i.
std::vector<int> served_counts(const VariableMap& map, const ClusterAssignment& clusters) {
  std::vector<int> out(clusters.num_rus(), 0);
  for (int i = 0; i < clusters.num_rus(); ++i)
    for (int j : clusters.served_mss[i])
      if (map.rate_var[j] >= 0) ++out[i];
  return out;
}

/// Antenna-diagonal covariances with value beta[i] on the antennas of RU i.
PrecoderCovariance diagonal_covariance(const SystemConfig& config, const VariableMap& map,
                                       const std::vector<double>& beta) {
  PrecoderCovariance v = PrecoderCovariance::clustered(map.support, map.total_tx);
  std::vector<int> owner(map.total_tx);
  for (int i = 0; i < config.num_rus; ++i)
    for (int a = 0; a < config.tx_antennas[i]; ++a) owner[config.tx_offset(i) + a] = i;
  for (int j = 0; j < config.num_mss; ++j) {
    if (map.cov_var[j] < 0) continue;
    const auto& s = map.support[j];
    RVector d(static_cast<Eigen::Index>(s.size()));
    for (std::size_t c = 0; c < s.size(); ++c) d[static_cast<Eigen::Index>(c)] = beta[owner[s[c]]];
    v.blocks[j] = d.cast<Complex>().asDiagonal();
  }
  return v;
}

double rate_margin(double value) { return 1e-7 * (1.0 + std::abs(value)); }

/// Largest strictly feasible rates for fixed covariances: below the rate
/// bound and below an equal share of each serving RU's remaining capacity.
std::vector<double> feasible_rates(const SystemConfig& config, const ClusterAssignment& clusters,
                                   const VariableMap& map, const std::vector<double>& rate_bound,
                                   const std::vector<double>& reserved) {
  const auto counts = served_counts(map, clusters);
  std::vector<double> r(config.num_mss, 0.0);
  for (int j = 0; j < config.num_mss; ++j) {
    if (map.rate_var[j] < 0) continue;
    double v = rate_bound[j] - rate_margin(rate_bound[j]);
    for (int i : clusters.serving_rus[j]) {
      const double share = (config.fronthaul_capacity[i] - reserved[i]) / counts[i];
      v = std::min(v, share - rate_margin(share));
    }
    r[j] = v;
  }
  return r;
}

bool has_variables(const convex::AffineForm& a) { return !a.psd.empty() || !a.scalar.empty() || !a.rate.empty(); }

void add_rate_sum_constraints(convex::ConvexProgram& p, const SystemConfig& config,
                              const ClusterAssignment& clusters, const VariableMap& map) {
  for (int i = 0; i < config.num_rus; ++i) {
    convex::Constraint c;
    c.label = "fronthaul" + std::to_string(i);
    for (int j : clusters.served_mss[i])
      if (map.rate_var[j] >= 0) c.affine.add_rate(map.rate_var[j], 1.0);
    if (!has_variables(c.affine)) continue;
    c.bound = config.fronthaul_capacity[i];
    p.constraints.push_back(std::move(c));
  }
}

void add_power_constraints(convex::ConvexProgram& p, const SystemConfig& config, const VariableMap& map) {
  for (int i = 0; i < config.num_rus; ++i) {
    convex::Constraint c;
    c.label = "power" + std::to_string(i);
    c.affine = detail::power_form(map, config, i);
    c.bound = config.power_budget[i];
    if (!has_variables(c.affine)) continue;
    p.constraints.push_back(std::move(c));
  }
}

struct RateTerms {
  std::vector<convex::LogDetAtom> atoms;  // per MS (empty atom list for unserved)
  std::vector<convex::AffineForm> tangents;
};

/// log2 det(full) - f(interference at `at`), per served MS, for one draw.
RateTerms rate_terms(const SystemConfig& config, const VariableMap& map, const ChannelRealization& h,
                     const convex::Solution& at) {
  RateTerms t;
  t.atoms.resize(config.num_mss);
  t.tangents.resize(config.num_mss);
  for (int j = 0; j < config.num_mss; ++j) {
    if (map.rate_var[j] < 0) continue;
    t.atoms[j] = detail::rate_argument(map, config, h, j, true).atom(1.0);
    const auto interference = detail::rate_argument(map, config, h, j, false);
    t.tangents[j] = interference.tangent(interference.evaluate(at), 1.0);
  }
  return t;
}

/// R_j + (1/n) sum_l f_l - (1/n) sum_l log2 det(full_l) <= 0
void add_rate_constraints(convex::ConvexProgram& p, const SystemConfig& config, const VariableMap& map,
                          const std::vector<RateTerms>& draws, std::vector<int>& index) {
  const double w = 1.0 / static_cast<double>(draws.size());
  index.assign(config.num_mss, -1);
  for (int j = 0; j < config.num_mss; ++j) {
    if (map.rate_var[j] < 0) continue;
    convex::Constraint c;
    c.label = "rate" + std::to_string(j);
    c.affine.add_rate(map.rate_var[j], 1.0);
    for (const auto& d : draws) {
      c.affine.add(d.tangents[j], w);
      c.neg_logdets.push_back(d.atoms[j]);
      c.neg_logdets.back().weight = w;
    }
    c.bound = 0.0;
    index[j] = static_cast<int>(p.constraints.size());
    p.constraints.push_back(std::move(c));
  }
}

void set_objective(convex::ConvexProgram& p, const SystemConfig& config, const VariableMap& map) {
  for (int j = 0; j < config.num_mss; ++j)
    if (map.rate_var[j] >= 0 && config.rate_weights[j] > 0.0)
      p.objective_affine.add_rate(map.rate_var[j], config.rate_weights[j]);
}

/// Rate-constraint bound (1/n) sum_l surrogate_l at `x`, read from the
/// constraint values with all rates at zero.
std::vector<double> surrogate_rate_bounds(const convex::ConvexProgram& p, const SystemConfig& config,
                                          const convex::Solution& x,
                                          const std::vector<int>& index) {
  convex::Solution probe = x;
  std::fill(probe.rate_values.begin(), probe.rate_values.end(), 0.0);
  const auto lhs = convex::constraint_values(p, probe);
  std::vector<double> out(config.num_mss, 0.0);
  for (int j = 0; j < config.num_mss; ++j)
    if (index[j] >= 0) out[j] = -lhs[index[j]];
  return out;
}

double weighted(const SystemConfig& config, const std::vector<double>& rates) {
  double acc = 0.0;
  for (int j = 0; j < config.num_mss; ++j) acc += config.rate_weights[j] * rates[j];
  return acc;
}

IterationRecord make_record(const SystemConfig& config, const ClusterAssignment& clusters, int outer, int inner,
                            double surrogate, double objective, const PrecoderCovariance& v,
                            const QuantizationProfile& q, const std::vector<double>& rates,
                            std::optional<int> coherence, int steps) {
  IterationRecord r;
  r.outer = outer;
  r.inner = inner;
  r.surrogate_objective = surrogate;
  r.objective = objective;
  r.fronthaul_load = cbp_fronthaul_loads(config, clusters, v, q, rates, coherence);
  r.power.resize(config.num_rus);
  for (int i = 0; i < config.num_rus; ++i) r.power[i] = transmit_power(config, v, q.variances[i], i);
  r.newton_steps = steps;
  return r;
}

bool converged(double prev, double cur, double tol) {
  const double scale = std::max(std::abs(prev), std::abs(cur));
  return std::abs(cur - prev) <= tol * scale;
}

}  // namespace

CbpSolution optimize_cbp_stochastic(const SystemConfig& config, const ChannelStatistics& stats,
                                    const ClusterAssignment& clusters, const SsumOptions& options) {
  const ChannelSampler sampler(stats);
  return optimize_cbp_stochastic(config, ChannelSource([&sampler](Rng& rng) { return sampler(rng); }), clusters,
                                 options);
}

CbpSolution optimize_cbp_stochastic(const SystemConfig& config, const ChannelSource& source,
                                    const ClusterAssignment& clusters, const SsumOptions& options) {
  options.validate();
  check_clusters(config, clusters);
  const VariableMap map = cbp_map(config, clusters, false, std::nullopt);
  const auto counts = served_counts(map, clusters);

  std::vector<double> beta(config.num_rus, 0.0);
  for (int i = 0; i < config.num_rus; ++i)
    if (counts[i] > 0) beta[i] = 0.9 * config.power_budget[i] / (config.tx_antennas[i] * counts[i]);
  const QuantizationProfile q = QuantizationProfile::zeros(config.num_rus);

  CbpSolution out;
  out.clusters = clusters;
  out.quantization = q;
  out.covariances = diagonal_covariance(config, map, beta);
  out.rates.assign(config.num_mss, 0.0);
  bool any_var = std::any_of(map.rate_var.begin(), map.rate_var.end(), [](int r) { return r >= 0; });

  Rng rng(options.seed);
  convex::Solution x = detail::point_of(map, out.covariances, q, out.rates);
  std::vector<RateTerms> draws;
  detail::SequentialSolver solver(options.solver);
  for (int n = 1; n <= options.outer_iterations; ++n) {
    const ChannelRealization h = source(rng);
    out.sample_count = n;
    if (!any_var) {
      out.objective_trace.push_back(0.0);
      out.trace.push_back(make_record(config, clusters, n, 0, 0.0, 0.0, out.covariances, q, out.rates,
                                      std::nullopt, 0));
      continue;
    }
    draws.push_back(rate_terms(config, map, h, x));
    convex::ConvexProgram p;
    detail::declare_variables(p, map);
    set_objective(p, config, map);
    std::vector<int> index;
    add_rate_constraints(p, config, map, draws, index);
    add_rate_sum_constraints(p, config, clusters, map);
    add_power_constraints(p, config, map);

    const auto bound = surrogate_rate_bounds(p, config, x, index);
    const auto warm_rates =
        feasible_rates(config, clusters, map, bound, std::vector<double>(config.num_rus, 0.0));
    x = detail::point_of(map, detail::covariance_of(map, x), q, warm_rates);

    const auto sol = solver.solve(p, x, "optimize_cbp_stochastic (outer " + std::to_string(n) + ")");
    x = sol;
    const auto v = detail::covariance_of(map, x);
    const auto rates = detail::rates_of(map, x);
    out.objective_trace.push_back(sol.objective_value);
    out.trace.push_back(make_record(config, clusters, n, 0, sol.objective_value, weighted(config, rates), v, q,
                                    rates, std::nullopt, sol.newton_steps));
  }
  if (any_var) {
    out.covariances = detail::covariance_of(map, x);
    out.rates = detail::rates_of(map, x);
  }
  return out;
}

CbpSolution optimize_cbp_perfect(const SystemConfig& config, const ChannelRealization& h,
                                 const ClusterAssignment& clusters, int coherence, const SsumOptions& options,
                                 std::optional<double> forced_quantization) {
  options.validate();
  check_clusters(config, clusters);
  if (coherence < 1) throw std::invalid_argument("optimize_cbp_perfect: coherence must be >= 1");
  if (forced_quantization && !(*forced_quantization >= kQuantizationFloor))
    throw std::invalid_argument("optimize_cbp_perfect: forced quantization variance below floor");
  const VariableMap map = cbp_map(config, clusters, true, forced_quantization);
  const auto counts = served_counts(map, clusters);
  const double t = coherence;

  // initialization: 90% power, precoder compression at 10% of capacity
  QuantizationProfile q;
  q.floor = kQuantizationFloor;
  q.variances = map.sigma_fixed;
  std::vector<double> beta(config.num_rus, 0.0);
  for (int i = 0; i < config.num_rus; ++i) {
    if (counts[i] == 0 || is_dark(config, i)) continue;
    const int nt = config.tx_antennas[i];
    const double pbar = config.power_budget[i];
    const double cbar = config.fronthaul_capacity[i];
    const CMatrix eye = CMatrix::Identity(nt, nt);
    double b = 0.0;
    if (forced_quantization) {
      b = 0.9 * (pbar - nt * *forced_quantization) / (nt * counts[i]);
      if (!(b > 0.0)) throw std::invalid_argument("optimize_cbp_perfect: forced quantization exhausts the power budget");
    } else {
      if (nt * kQuantizationFloor >= pbar)
        throw std::invalid_argument("optimize_cbp_perfect: power budget cannot cover the quantization floor");
      const double rho = std::exp2(0.1 * cbar * t / nt);
      b = 0.9 * pbar * (1.0 - 1.0 / rho) / (nt * counts[i]);
    }
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200)
        throw std::runtime_error("optimize_cbp_perfect: no feasible initialization for RU " + std::to_string(i));
      const CMatrix block = counts[i] * b * eye;
      double s = q.variances[i];
      if (!forced_quantization) s = detail::quantization_for_rate(block, 0.1 * cbar * t, kQuantizationFloor);
      const double power = nt * (counts[i] * b + s);
      const double load = (linalg::log2_det(block + s * eye) - nt * std::log2(s)) / t;
      const double target = forced_quantization ? 0.5 * cbar : cbar;
      if (power < pbar && load < target && b > 0.0) {
        q.variances[i] = s;
        break;
      }
      b *= 0.5;
    }
    beta[i] = b;
  }
  PrecoderCovariance v = diagonal_covariance(config, map, beta);

  CbpSolution out;
  out.clusters = clusters;
  out.sample_count = 1;
  out.covariances = v;
  out.quantization = q;
  out.rates.assign(config.num_mss, 0.0);

  const bool any_var = std::any_of(map.rate_var.begin(), map.rate_var.end(), [](int r) { return r >= 0; });
  std::vector<double> reserved(config.num_rus, 0.0);
  for (int i = 0; i < config.num_rus; ++i) reserved[i] = cbp_precoder_fronthaul_rate(config, v, q.variances[i], i, coherence, q.floor);
  std::vector<double> bound(config.num_mss, 0.0);
  for (int j = 0; j < config.num_mss; ++j)
    if (map.rate_var[j] >= 0) bound[j] = cbp_user_rate(config, h, v, q, j);
  out.rates = feasible_rates(config, clusters, map, bound, reserved);
  if (!any_var) {
    out.objective_trace.push_back(0.0);
    out.trace.push_back(make_record(config, clusters, 0, 0, 0.0, 0.0, v, q, out.rates, coherence, 0));
    return out;
  }

  convex::Solution x = detail::point_of(map, v, q, out.rates);
  double prev = weighted(config, out.rates);
  out.objective_trace.push_back(prev);
  out.trace.push_back(make_record(config, clusters, 0, 0, prev, prev, v, q, out.rates, coherence, 0));
  detail::SequentialSolver solver(options.solver);
  for (int it = 1; it <= options.mm_max_iterations; ++it) {
    convex::ConvexProgram p;
    detail::declare_variables(p, map);
    set_objective(p, config, map);
    std::vector<int> index;
    add_rate_constraints(p, config, map, {rate_terms(config, map, h, x)}, index);
    for (int i = 0; i < config.num_rus; ++i) {
      convex::Constraint c;
      c.label = "fronthaul" + std::to_string(i);
      for (int j : clusters.served_mss[i])
        if (map.rate_var[j] >= 0) c.affine.add_rate(map.rate_var[j], 1.0);
      const auto arg = detail::fronthaul_argument(map, config, i);
      if (!arg.psd_maps.empty()) {
        c.affine.add(arg.tangent(arg.evaluate(x), 1.0), 1.0 / t);
        const double nt = config.tx_antennas[i];
        if (map.sigma_var[i] >= 0)
          c.neg_logs.push_back({map.sigma_var[i], nt / t});
        else
          c.affine.constant -= nt * std::log2(map.sigma_fixed[i]) / t;
      }
      if (!has_variables(c.affine)) continue;
      c.bound = config.fronthaul_capacity[i];
      p.constraints.push_back(std::move(c));
    }
    add_power_constraints(p, config, map);

    const auto sol =
        solver.solve(p, x, "optimize_cbp_perfect (iteration " + std::to_string(it) + ")");
    x = sol;
    const auto vi = detail::covariance_of(map, x);
    const auto qi = detail::quantization_of(map, x, kQuantizationFloor);
    const auto rates = detail::rates_of(map, x);
    const double obj = weighted(config, rates);
    out.objective_trace.push_back(obj);
    out.trace.push_back(make_record(config, clusters, 0, it, sol.objective_value, obj, vi, qi, rates, coherence,
                                    sol.newton_steps));
    const bool done = converged(prev, obj, options.inner_tolerance);
    prev = obj;
    if (done) break;
  }
  out.covariances = detail::covariance_of(map, x);
  out.quantization = detail::quantization_of(map, x, kQuantizationFloor);
  out.rates = detail::rates_of(map, x);
  return out;
}

}  // namespace cran
