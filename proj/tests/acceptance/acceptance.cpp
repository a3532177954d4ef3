// Acceptance run: one [PRIMARY] line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cran/experiment.hpp"
#include "instances.hpp"

namespace {

using namespace cran;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string num(double x) { return fmt("%.6g", x); }

void note(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

ChannelSource constant_source(ChannelRealization h) {
  return [h](Rng&) { return h; };
}

// 1: scalar CAP oracle, sigma_x^2 = P 2^-C, v = P (1 - 2^-C)
Outcome scalar_oracle() {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = SystemConfig::uniform(1, 1, 1, 1, 2.0, 10.0, 1);
  const ChannelRealization h({1}, {1}, CMatrix::Constant(1, 1, 1.0));
  const double rate = std::log2(11.0) - std::log2(3.5);
  SsumOptions opt;
  opt.outer_iterations = 20;
  const auto perfect = optimize_cap_perfect(cfg, h);
  const auto stochastic = optimize_cap_stochastic(cfg, constant_source(h), opt);
  double err = 0.0;
  for (const CapSolution* s : {&perfect, &stochastic}) {
    err = std::max(err, std::abs(s->quantization.variances[0] - 2.5));
    err = std::max(err, std::abs(s->covariances.blocks[0](0, 0).real() - 7.5));
    err = std::max(err, std::abs(weighted_sum_rate(cfg, h, s->covariances, s->quantization) - rate));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {err <= 1e-3 && secs < 10.0, "max error " + num(err) + ", " + fmt("%.2f s", secs)};
}

// 2: surrogate tightness and bounds
Outcome surrogate_suite() {
  Rng rng(2);
  double tight = 0.0, slack = -1e300;
  int instances = 0;
  for (int rep = 0; rep < 1000; ++rep, ++instances) {
    const auto c = testing::random_config(rng);
    const auto h = testing::random_channel(c, rng);
    const SurrogateExpansionPoint point{testing::random_covariance(c, rng), testing::random_quantization(c, rng), h};
    const auto v = testing::random_covariance(c, rng, 5.0);
    const auto q = testing::random_quantization(c, rng);
    for (int j = 0; j < c.num_mss; ++j) {
      tight = std::max(tight, std::abs(cap_rate_surrogate(c, point, point.covariance, point.quantization, j) -
                                       cap_user_rate(c, h, point.covariance, point.quantization, j)));
      slack = std::max(slack, cap_rate_surrogate(c, point, v, q, j) - cap_user_rate(c, h, v, q, j));
    }
    for (int i = 0; i < c.num_rus; ++i) {
      const double s0 = point.quantization.variances[i];
      tight = std::max(tight, std::abs(cap_fronthaul_surrogate(c, point, point.covariance, s0, i) -
                                       cap_fronthaul_rate(c, point.covariance, s0, i)));
      slack = std::max(slack, cap_fronthaul_rate(c, v, q.variances[i], i) -
                                  cap_fronthaul_surrogate(c, point, v, q.variances[i], i));
    }
  }
  for (int rep = 0; rep < 1000; ++rep, ++instances) {
    const auto c = testing::random_config(rng);
    const auto clusters = testing::random_clusters(c, 1 + rep % c.num_mss, rng);
    const auto h = testing::random_channel(c, rng);
    const auto zero = QuantizationProfile::zeros(c.num_rus);
    const SurrogateExpansionPoint point{testing::random_clustered_covariance(c, clusters, rng), zero, h};
    const auto v = testing::random_clustered_covariance(c, clusters, rng, 4.0);
    for (int j = 0; j < c.num_mss; ++j) {
      tight = std::max(tight, std::abs(cbp_rate_surrogate(c, point, point.covariance, zero, j) -
                                       cbp_user_rate(c, h, point.covariance, zero, j)));
      slack = std::max(slack, cbp_rate_surrogate(c, point, v, zero, j) - cbp_user_rate(c, h, v, zero, j));
    }
  }
  double logdet_slack = -1e300;
  for (int rep = 0; rep < 1000; ++rep, ++instances) {
    const int d = 1 + rep % 4;
    const CMatrix a = testing::random_psd(d, d, 4.0, rng) + 0.1 * CMatrix::Identity(d, d);
    const CMatrix b = testing::random_psd(d, d, 4.0, rng) + 1e-3 * CMatrix::Identity(d, d);
    logdet_slack = std::max(logdet_slack, linalg::log2_det(b) - linearize_logdet(a, b));
  }
  const bool pass = tight <= 1e-9 && slack <= 1e-9 && logdet_slack <= 1e-9;
  return {pass, std::to_string(instances) + " instances, tightness " + num(tight) + ", bound slack " + num(slack) +
                    ", logdet slack " + num(logdet_slack)};
}

void worst_violation(const SystemConfig& c, const std::vector<IterationRecord>& trace, double& worst) {
  for (const auto& r : trace)
    for (int i = 0; i < c.num_rus; ++i) {
      worst = std::max(worst, r.fronthaul_load[i] - c.fronthaul_capacity[i]);
      worst = std::max(worst, r.power[i] - c.power_budget[i]);
    }
}

// 3: every SSUM iterate feasible
Outcome feasibility_suite() {
  Rng rng(3);
  std::uniform_real_distribution<double> fronthaul(0.5, 8.0), power_db(0.0, 20.0);
  const int sizes[] = {1, 2, 4};
  double worst = -1e300;
  std::size_t records = 0;
  for (int run = 0; run < 20; ++run) {
    const auto net = testing::desk_network(300 + run, fronthaul(rng), power_db(rng));
    SsumOptions opt;
    opt.outer_iterations = 5;
    opt.seed = 1000 + run;
    const auto cap = optimize_cap_stochastic(net.config, net.stats, opt);
    worst_violation(net.config, cap.trace, worst);
    const auto clusters = assign_clusters_stochastic(net.stats, sizes[run % 3]);
    opt.outer_iterations = 10;
    const auto cbp = optimize_cbp_stochastic(net.config, net.stats, clusters, opt);
    worst_violation(net.config, cbp.trace, worst);
    records += cap.trace.size() + cbp.trace.size();
    if (run % 5 == 4) note("feasibility runs " + std::to_string(run + 1) + "/20");
  }
  return {worst <= 1e-6, "40 runs, " + std::to_string(records) + " iterates, worst violation " + num(worst)};
}

// 4: perfect-CSI MM traces nondecreasing
Outcome monotonicity_suite() {
  Rng rng(4);
  std::uniform_real_distribution<double> fronthaul(0.5, 8.0), power_db(0.0, 20.0);
  const int sizes[] = {1, 2, 4};
  double worst = 0.0;
  int steps = 0;
  auto scan = [&](const std::vector<IterationRecord>& trace) {
    for (std::size_t k = 1; k < trace.size(); ++k, ++steps)
      worst = std::max(worst, trace[k - 1].objective - trace[k].objective);
  };
  for (int run = 0; run < 20; ++run) {
    const auto net = testing::desk_network(400 + run, fronthaul(rng), power_db(rng), 5 + run);
    const auto h = ChannelSampler(net.stats)(rng);
    scan(optimize_cap_perfect(net.config, h).trace);
    const auto clusters = assign_clusters_instantaneous(h, sizes[run % 3]);
    scan(optimize_cbp_perfect(net.config, h, clusters, net.config.coherence_length).trace);
  }
  return {worst <= 1e-6, "40 traces, " + std::to_string(steps) + " steps, worst decrease " + num(worst)};
}

ExperimentSpec desk_spec(Csi csi, std::vector<Scheme> schemes, int cluster, std::vector<double> fronthaul,
                         int geometries, int samples) {
  ExperimentSpec s;
  s.name = "acceptance";
  s.schemes = std::move(schemes);
  s.csi = {csi};
  s.cluster_sizes = {cluster};
  s.variable = SweepVariable::FronthaulCapacity;
  s.values = std::move(fronthaul);
  s.geometries = geometries;
  s.samples = samples;
  s.optimizer.outer_iterations = 30;
  s.validate();
  return s;
}

SweepResult run_noted(const ExperimentSpec& spec, const std::string& label) {
  const auto start = std::chrono::steady_clock::now();
  auto r = run_sweep(spec, 1, [&](const ResultRow& row) {
    note(label + ": " + to_string(row.scheme) + " geometry " + std::to_string(row.geometry) + " at " +
         num(row.sweep_value) + (row.ok ? "" : " failed: " + row.message));
  });
  note(label + fmt(" done in %.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
  return r;
}

const SummaryRow& pick(const SweepResult& r, double value, Scheme scheme) {
  for (const auto& s : r.summary)
    if (s.sweep_value == value && s.scheme == scheme) return s;
  throw std::runtime_error("missing summary row");
}

std::string describe(const SummaryRow& s) {
  return to_string(s.scheme) + " " + fmt("%.4f", s.mean_sum_rate) + " +- " + fmt("%.4f", s.std_error);
}

// margin of a over b in combined standard errors
double margin(const SummaryRow& a, const SummaryRow& b) {
  const double se = std::hypot(a.std_error, b.std_error);
  return (a.mean_sum_rate - b.mean_sum_rate) / se;
}

// 5: fronthaul-capacity trend
Outcome fronthaul_trend() {
  const auto perfect = run_noted(desk_spec(Csi::Perfect, {Scheme::Cap, Scheme::Cbp}, 2, {8.0}, 10, 500), "C=8 perfect");
  const auto stochastic =
      run_noted(desk_spec(Csi::Stochastic, {Scheme::Cap, Scheme::Cbp}, 1, {1.0}, 10, 500), "C=1 stochastic");
  if (perfect.failures() + stochastic.failures() > 0) return {false, "sweep rows failed"};
  const auto& cap8 = pick(perfect, 8.0, Scheme::Cap);
  const auto& cbp8 = pick(perfect, 8.0, Scheme::Cbp);
  const auto& cap1 = pick(stochastic, 1.0, Scheme::Cap);
  const auto& cbp1 = pick(stochastic, 1.0, Scheme::Cbp);
  const double m8 = margin(cap8, cbp8), m1 = margin(cbp1, cap1);
  return {m8 > 2.0 && m1 > 2.0, "C=8 perfect: " + describe(cap8) + " vs " + describe(cbp8) + " (" + fmt("%.1f", m8) +
                                    " SE); C=1 stochastic: " + describe(cbp1) + " vs " + describe(cap1) + " (" +
                                    fmt("%.1f", m1) + " SE)"};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
      for (std::size_t m = k; m <= e; ++m) r[idx[m]] = 0.5 * static_cast<double>(k + e);
      k = e + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

// 6: coherence trend
Outcome coherence_trend() {
  ExperimentSpec s;
  s.name = "acceptance";
  s.base.fronthaul_capacity = 2.0;
  s.base.power_db = 20.0;
  s.schemes = {Scheme::Cap, Scheme::Cbp};
  s.csi = {Csi::Perfect};
  s.cluster_sizes = {2};
  s.variable = SweepVariable::Coherence;
  s.values = {5, 10, 20, 40};
  s.geometries = 4;
  s.samples = 60;
  s.validate();
  const auto r = run_noted(s, "coherence");
  if (r.failures() > 0) return {false, "sweep rows failed"};
  std::vector<double> cap, cbp;
  for (double t : s.values) {
    cap.push_back(pick(r, t, Scheme::Cap).mean_sum_rate);
    cbp.push_back(pick(r, t, Scheme::Cbp).mean_sum_rate);
  }
  const auto [lo, hi] = std::minmax_element(cap.begin(), cap.end());
  const double spread = (*hi - *lo) / (std::accumulate(cap.begin(), cap.end(), 0.0) / cap.size());
  const double rho = spearman(s.values, cbp);
  std::string detail = "CAP spread " + fmt("%.2f%%", 100.0 * spread) + ", CBP Spearman " + fmt("%.2f", rho) + "; T:";
  for (std::size_t k = 0; k < cbp.size(); ++k)
    detail += " " + num(s.values[k]) + "=" + fmt("%.3f", cap[k]) + "/" + fmt("%.3f", cbp[k]);
  return {spread < 0.05 && rho >= 0.9, detail + " (CAP/CBP)"};
}

// 7: full clusters approach CAP
Outcome full_cluster_consistency() {
  const auto r = run_noted(desk_spec(Csi::Perfect, {Scheme::Cap, Scheme::Cbp}, 4, {12.0}, 6, 100), "full clusters");
  if (r.failures() > 0) return {false, "sweep rows failed"};
  const auto& cap = pick(r, 12.0, Scheme::Cap);
  const auto& cbp = pick(r, 12.0, Scheme::Cbp);
  const double gap = (cap.mean_sum_rate - cbp.mean_sum_rate) / cap.mean_sum_rate;
  return {gap <= 0.10, describe(cbp) + " vs " + describe(cap) + ", shortfall " + fmt("%.2f%%", 100.0 * gap)};
}

// 8: channel statistics
Outcome channel_statistics() {
  Rng rng(8);
  std::uniform_real_distribution<double> ang(-3.14159, 3.14159), spread(1e-3, 1.5), alpha(1e-4, 1.0);
  double diag = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double a = alpha(rng);
    const CMatrix s = one_ring_covariance(ang(rng), spread(rng), a, 1 + rep % 8);
    for (Eigen::Index k = 0; k < s.rows(); ++k) diag = std::max(diag, std::abs(s(k, k) - a));
  }
  const auto net = testing::desk_network(8, 2.0, 10.0, 20, 4, 4, 2, 2);
  for (const auto& l : net.stats.links)
    for (Eigen::Index k = 0; k < l.tx_correlation.rows(); ++k)
      diag = std::max(diag, std::abs(l.tx_correlation(k, k) - l.pathloss));

  const ChannelSampler sampler(net.stats);
  const int n = 100000;
  const std::size_t links = net.stats.links.size();
  std::vector<CMatrix> cov(links, CMatrix::Zero(4, 4));
  std::vector<double> norm2(links, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto h = sampler(rng);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        const CMatrix b = h.block(j, i);
        const CVector v = Eigen::Map<const CVector>(b.data(), b.size());
        cov[j * 4 + i] += v * v.adjoint();
        norm2[j * 4 + i] += b.squaredNorm();
      }
  }
  double kron = 0.0, energy = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) {
      const auto& l = net.stats.link(j, i);
      const CMatrix t = l.tx_correlation.transpose();
      CMatrix expected(4, 4);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) expected.block(2 * a, 2 * b, 2, 2) = t(a, b) * l.rx_correlation;
      kron = std::max(kron, (cov[j * 4 + i] / n - expected).norm() / expected.norm());
      const double target = 2.0 * l.tx_correlation.trace().real();
      energy = std::max(energy, std::abs(norm2[j * 4 + i] / n - target) / target);
    }
  return {diag <= 1e-9 && kron < 0.05 && energy < 0.02,
          "diagonal error " + num(diag) + ", Kronecker error " + fmt("%.2f%%", 100.0 * kron) + ", E|H|^2 error " +
              fmt("%.2f%%", 100.0 * energy) + " over 16 links"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9: replay from the sidecar alone
Outcome replay_determinism() {
  const fs::path root = fs::temp_directory_path() / "cran_acceptance_replay";
  fs::remove_all(root);
  std::vector<ExperimentSpec> specs(2);
  specs[0].name = "replay-fronthaul";
  specs[0].base.num_rus = 2;
  specs[0].base.num_mss = 2;
  specs[0].cluster_sizes = {1, 2};
  specs[0].values = {1.0, 4.0};
  specs[0].geometries = 2;
  specs[0].samples = 16;
  specs[0].seed = 91;
  specs[0].optimizer.outer_iterations = 4;
  specs[1] = specs[0];
  specs[1].name = "replay-mss";
  specs[1].variable = SweepVariable::NumMss;
  specs[1].values = {1, 3};
  specs[1].csi = {Csi::Stochastic};
  int identical = 0, files = 0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const fs::path dir = root / std::to_string(k);
    const auto first = emit_results(specs[k], run_sweep(specs[k], 1), dir);
    const auto spec = spec_from_sidecar(slurp(first.sidecar));
    const auto again = emit_results(spec, run_sweep(spec, 2), dir / "replay");
    for (auto member : {&OutputFiles::results, &OutputFiles::summary, &OutputFiles::sidecar}) {
      ++files;
      identical += slurp(first.*member) == slurp(again.*member);
    }
  }
  fs::remove_all(root);
  return {identical == files, std::to_string(identical) + "/" + std::to_string(files) + " files byte-identical"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "scalar oracle", scalar_oracle},
      {2, "surrogate suite", surrogate_suite},
      {3, "feasibility of every iterate", feasibility_suite},
      {4, "monotone MM traces", monotonicity_suite},
      {5, "fronthaul-capacity trend", fronthaul_trend},
      {6, "coherence-time trend", coherence_trend},
      {7, "full-cluster CBP approaches CAP", full_cluster_consistency},
      {8, "channel statistics", channel_statistics},
      {9, "sidecar replay determinism", replay_determinism},
  };
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::atoi(argv[k]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << "[PRIMARY] criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << fmt(" [%.1f s]", secs) << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
