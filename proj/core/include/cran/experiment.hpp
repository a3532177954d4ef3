#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cran/evaluator.hpp"

namespace cran {

enum class Scheme { Cap, Cbp };
enum class Csi { Perfect, Stochastic };
enum class SweepVariable { FronthaulCapacity, Power, Coherence, NumMss, RxAntennas };

std::string to_string(Scheme s);
std::string to_string(Csi c);
std::string to_string(SweepVariable v);
Scheme parse_scheme(std::string_view s);
Csi parse_csi(std::string_view s);
SweepVariable parse_sweep_variable(std::string_view s);

double db_to_linear(double db);

/// Homogeneous scenario the sweep perturbs. Power is in dB relative to the
/// unit receiver noise.
struct Scenario {
  int num_rus = 4;
  int num_mss = 4;
  int tx_per_ru = 2;
  int rx_per_ms = 1;
  double fronthaul_capacity = 2.0;
  double power_db = 10.0;
  int coherence = 20;
  double area_side = 500.0;
  double ref_distance = 50.0;
  double pathloss_exponent = 3.0;
  double scattering_radius = 10.0;
};

struct ExperimentSpec {
  std::string name = "sweep";
  Scenario base;
  std::vector<Scheme> schemes{Scheme::Cap, Scheme::Cbp};
  std::vector<Csi> csi{Csi::Perfect, Csi::Stochastic};
  std::vector<int> cluster_sizes{2};
  SweepVariable variable = SweepVariable::FronthaulCapacity;
  std::vector<double> values{0.0, 2.0, 4.0, 6.0, 8.0};
  int geometries = 20;
  int samples = 500;
  std::uint64_t seed = 1;
  SsumOptions optimizer;

  /// Throws std::invalid_argument naming the first problem.
  void validate() const;
  /// Base scenario with the sweep variable set to `value`.
  SystemConfig config_at(double value) const;
};

ExperimentSpec parse_spec(std::string_view json_text);
std::string spec_to_json(const ExperimentSpec& spec);

struct Variant {
  Scheme scheme = Scheme::Cap;
  Csi csi = Csi::Perfect;
  int cluster_size = 0;  // 0 for CAP
};

/// Schemes x CSI x cluster sizes in spec order.
std::vector<Variant> variants(const ExperimentSpec& spec);

/// Per-geometry random streams. Every variant and grid point of a geometry
/// shares them (common random numbers); the three tags keep placement,
/// optimizer draws and evaluation draws disjoint.
struct SeedSet {
  std::uint64_t placement = 0;
  std::uint64_t optimizer = 0;
  std::uint64_t evaluation = 0;
};
SeedSet derive_seeds(std::uint64_t base, int geometry);

struct ResultRow {
  double sweep_value = 0.0;
  Scheme scheme = Scheme::Cap;
  Csi csi = Csi::Perfect;
  int cluster_size = 0;
  int geometry = 0;
  double mean_sum_rate = 0.0;
  double std_error = 0.0;
  int samples = 0;
  bool ok = true;
  std::string message;
  double wall_time = 0.0;  // seconds; written to the timings file only
};

/// Mean over the geometries that succeeded; the error combines the
/// per-geometry errors as sqrt(sum se^2) / G.
struct SummaryRow {
  double sweep_value = 0.0;
  Scheme scheme = Scheme::Cap;
  Csi csi = Csi::Perfect;
  int cluster_size = 0;
  int geometries = 0;
  int failures = 0;
  double mean_sum_rate = 0.0;
  double std_error = 0.0;
};

struct SweepResult {
  std::vector<ResultRow> rows;  // sorted by (value, variant, geometry)
  std::vector<SummaryRow> summary;
  int failures() const;
};

/// One (grid point, variant, geometry) cell.
ErgodicEstimate evaluate_variant(const SystemConfig& config, const ChannelStatistics& stats, const Variant& variant,
                                 const SsumOptions& optimizer, const SeedSet& seeds, int samples, int workers);

SweepResult run_sweep(const ExperimentSpec& spec, int workers = 1,
                      const std::function<void(const ResultRow&)>& progress = {});

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string timings_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(std::string_view text);

/// Resolved spec plus every derived seed.
std::string sidecar_json(const ExperimentSpec& spec);
/// Recovers the spec and checks the recorded seeds against a fresh
/// derivation.
ExperimentSpec spec_from_sidecar(std::string_view text);

struct OutputFiles {
  std::filesystem::path results;
  std::filesystem::path summary;
  std::filesystem::path timings;
  std::filesystem::path sidecar;
};

/// Writes results.csv, summary.csv, timings.csv and sidecar.json into `dir`.
OutputFiles emit_results(const ExperimentSpec& spec, const SweepResult& result, const std::filesystem::path& dir);

}  // namespace cran
