#include <benchmark/benchmark.h>

#include "cran/cap_optimizer.hpp"
#include "cran/cbp_optimizer.hpp"
#include "cran/evaluator.hpp"
#include "cran/experiment.hpp"

namespace {

// desk-scale network shared by the optimizer benchmarks
struct Desk {
  cran::SystemConfig config;
  cran::ChannelStatistics stats;
  cran::ChannelRealization h;

  explicit Desk(double fronthaul) {
    config = cran::SystemConfig::uniform(4, 4, 2, 1, fronthaul, cran::db_to_linear(10.0), 20);
    stats = cran::build_statistics(cran::place_nodes(config, 11), config);
    cran::Rng rng(5);
    h = cran::sample_channel(stats, rng);
  }
};

void BM_OneRingCovariance(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cran::one_ring_covariance(0.7, 0.05, 1.0, n));
}
BENCHMARK(BM_OneRingCovariance)->Arg(2)->Arg(4)->Arg(8);

void BM_SampleChannel(benchmark::State& state) {
  const Desk d(4.0);
  const cran::ChannelSampler sampler(d.stats);
  cran::Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sampler(rng));
}
BENCHMARK(BM_SampleChannel);

void BM_CapPerfectBlock(benchmark::State& state) {
  const Desk d(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cran::optimize_cap_perfect(d.config, d.h));
}
BENCHMARK(BM_CapPerfectBlock)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_CbpPerfectBlock(benchmark::State& state) {
  const Desk d(static_cast<double>(state.range(0)));
  const auto clusters = cran::assign_clusters_instantaneous(d.h, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(cran::optimize_cbp_perfect(d.config, d.h, clusters, d.config.coherence_length));
}
BENCHMARK(BM_CbpPerfectBlock)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_CapStochastic(benchmark::State& state) {
  const Desk d(2.0);
  cran::SsumOptions opt;
  opt.outer_iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cran::optimize_cap_stochastic(d.config, d.stats, opt));
}
BENCHMARK(BM_CapStochastic)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_EvaluateFixedDesign(benchmark::State& state) {
  const Desk d(2.0);
  const auto clusters = cran::assign_clusters_stochastic(d.stats, 2);
  cran::SsumOptions opt;
  opt.outer_iterations = 5;
  const auto design = cran::optimize_cbp_stochastic(d.config, d.stats, clusters, opt);
  const cran::EvaluationOptions eval{static_cast<int>(state.range(0)), 3, 1};
  for (auto _ : state) benchmark::DoNotOptimize(cran::ergodic_sum_rate(d.config, d.stats, design, eval));
}
BENCHMARK(BM_EvaluateFixedDesign)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
