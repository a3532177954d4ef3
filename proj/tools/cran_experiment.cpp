// Batch sweep runner: sweep / validate / replay.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cran/experiment.hpp"
#include "cran/serialization.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailedRows = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitReplayMismatch = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_row(const cran::ResultRow& r) {
  std::cerr << "  value=" << cran::format_decimal(r.sweep_value) << ' ' << cran::to_string(r.scheme) << '/'
            << cran::to_string(r.csi);
  if (r.scheme == cran::Scheme::Cbp) std::cerr << " Nc=" << r.cluster_size;
  std::cerr << " geometry=" << r.geometry;
  if (r.ok)
    std::cerr << " rate=" << r.mean_sum_rate << " +- " << r.std_error;
  else
    std::cerr << " FAILED: " << r.message;
  std::cerr << " (" << r.wall_time << " s)\n";
}

int report_failures(const cran::SweepResult& result) {
  const int n = result.failures();
  if (n == 0) return 0;
  std::cerr << n << " of " << result.rows.size() << " rows failed:\n";
  for (const auto& r : result.rows)
    if (!r.ok) print_row(r);
  return kExitFailedRows;
}

cran::SweepResult execute(const cran::ExperimentSpec& spec, int workers, bool quiet) {
  std::cerr << "sweep '" << spec.name << "': " << spec.values.size() << " grid points x "
            << cran::variants(spec).size() << " variants x " << spec.geometries << " geometries\n";
  return cran::run_sweep(spec, workers, [quiet](const cran::ResultRow& r) {
    if (!quiet) print_row(r);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fronthaul compression and precoding sweeps for C-RAN downlinks"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string sidecar_path;
  std::string out_dir;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto* sweep = app.add_subcommand("sweep", "Run a sweep and write results, summary, timings and sidecar");
  sweep->add_option("spec", spec_path, "Spec file (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory")->default_val("results");
  sweep->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "Override the spec's base seed");
  sweep->add_flag("--quiet", quiet, "Suppress per-row progress");

  auto* validate = app.add_subcommand("validate", "Check a spec file and print it fully resolved");
  validate->add_option("spec", spec_path, "Spec file (JSON)")->required()->check(CLI::ExistingFile);
  validate->add_option("--seed", seed, "Override the spec's base seed");

  auto* replay = app.add_subcommand("replay", "Re-run a sweep from its sidecar and compare the result files");
  replay->add_option("sidecar", sidecar_path, "sidecar.json written by sweep")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out_dir, "Output directory (default: <sidecar dir>/replay)");
  replay->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  replay->add_flag("--quiet", quiet, "Suppress per-row progress");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate || *sweep) {
      cran::ExperimentSpec spec;
      try {
        spec = cran::parse_spec(read_file(spec_path));
        if (seed) spec.seed = *seed;
        spec.validate();
      } catch (const std::exception& e) {
        std::cerr << "invalid spec " << spec_path << ": " << e.what() << '\n';
        return kExitBadInput;
      }
      if (*validate) {
        std::cout << cran::spec_to_json(spec) << '\n';
        return 0;
      }
      const auto result = execute(spec, workers, quiet);
      const auto files = cran::emit_results(spec, result, out_dir);
      std::cerr << "wrote " << files.results.string() << ", " << files.summary.string() << ", "
                << files.timings.string() << ", " << files.sidecar.string() << '\n';
      return report_failures(result);
    }

    // replay
    const fs::path sidecar(sidecar_path);
    cran::ExperimentSpec spec;
    try {
      spec = cran::spec_from_sidecar(read_file(sidecar));
    } catch (const std::exception& e) {
      std::cerr << "invalid sidecar " << sidecar_path << ": " << e.what() << '\n';
      return kExitBadInput;
    }
    const fs::path source_dir = sidecar.parent_path();
    const fs::path target = out_dir.empty() ? source_dir / "replay" : fs::path(out_dir);
    const auto result = execute(spec, workers, quiet);
    const auto files = cran::emit_results(spec, result, target);
    // timings carry wall-clock times and are not expected to match
    bool identical = true;
    for (const auto& [mine, name] : {std::pair{files.results, "results.csv"}, std::pair{files.summary, "summary.csv"},
                                     std::pair{files.sidecar, "sidecar.json"}}) {
      const fs::path original = source_dir / name;
      if (!fs::exists(original)) {
        std::cerr << "replay: " << original.string() << " missing, nothing to compare\n";
        identical = false;
        continue;
      }
      const bool same = read_file(original) == read_file(mine);
      std::cerr << "replay: " << name << (same ? " identical" : " DIFFERS") << '\n';
      identical = identical && same;
    }
    const int status = report_failures(result);
    if (!identical) return kExitReplayMismatch;
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
}
