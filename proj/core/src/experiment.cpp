#include "cran/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "cran/serialization.hpp"

namespace cran {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPlacementTag = 0x706c6163;
constexpr std::uint64_t kOptimizerTag = 0x6f707469;
constexpr std::uint64_t kEvaluationTag = 0x6576616c;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("experiment spec: " + what);
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  require(j.is_object(), where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) require(allowed.count(k) > 0, "unknown key '" + k + "' in " + where);
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

json scenario_json(const Scenario& s) {
  return json{{"num_rus", s.num_rus},
              {"num_mss", s.num_mss},
              {"tx_per_ru", s.tx_per_ru},
              {"rx_per_ms", s.rx_per_ms},
              {"fronthaul_capacity", s.fronthaul_capacity},
              {"power_db", s.power_db},
              {"coherence", s.coherence},
              {"area_side", s.area_side},
              {"ref_distance", s.ref_distance},
              {"pathloss_exponent", s.pathloss_exponent},
              {"scattering_radius", s.scattering_radius}};
}

Scenario scenario_from(const json& j) {
  reject_unknown(j,
                 {"num_rus", "num_mss", "tx_per_ru", "rx_per_ms", "fronthaul_capacity", "power_db", "coherence",
                  "area_side", "ref_distance", "pathloss_exponent", "scattering_radius"},
                 "scenario");
  Scenario s;
  s.num_rus = j.value("num_rus", s.num_rus);
  s.num_mss = j.value("num_mss", s.num_mss);
  s.tx_per_ru = j.value("tx_per_ru", s.tx_per_ru);
  s.rx_per_ms = j.value("rx_per_ms", s.rx_per_ms);
  s.fronthaul_capacity = j.value("fronthaul_capacity", s.fronthaul_capacity);
  s.power_db = j.value("power_db", s.power_db);
  s.coherence = j.value("coherence", s.coherence);
  s.area_side = j.value("area_side", s.area_side);
  s.ref_distance = j.value("ref_distance", s.ref_distance);
  s.pathloss_exponent = j.value("pathloss_exponent", s.pathloss_exponent);
  s.scattering_radius = j.value("scattering_radius", s.scattering_radius);
  return s;
}

json optimizer_json(const SsumOptions& o) {
  return json{{"outer_iterations", o.outer_iterations},
              {"inner_tolerance", o.inner_tolerance},
              {"inner_max", o.inner_max},
              {"inner_min", o.inner_min},
              {"mm_max_iterations", o.mm_max_iterations},
              {"solver_tolerance", o.solver.tolerance},
              {"solver_max_iterations", o.solver.max_iterations}};
}

SsumOptions optimizer_from(const json& j) {
  reject_unknown(j,
                 {"outer_iterations", "inner_tolerance", "inner_max", "inner_min", "mm_max_iterations",
                  "solver_tolerance", "solver_max_iterations"},
                 "optimizer");
  SsumOptions o;
  o.outer_iterations = j.value("outer_iterations", o.outer_iterations);
  o.inner_tolerance = j.value("inner_tolerance", o.inner_tolerance);
  o.inner_max = j.value("inner_max", o.inner_max);
  o.inner_min = j.value("inner_min", o.inner_min);
  o.mm_max_iterations = j.value("mm_max_iterations", o.mm_max_iterations);
  o.solver.tolerance = j.value("solver_tolerance", o.solver.tolerance);
  o.solver.max_iterations = j.value("solver_max_iterations", o.solver.max_iterations);
  return o;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

// minimal RFC-4180 field splitter; rows never contain embedded newlines
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (in_quotes) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

const char* kResultsHeader = "sweep_value,scheme,csi,cluster_size,geometry,mean_sum_rate,std_error,samples,status,message";

}  // namespace

std::string to_string(Scheme s) { return s == Scheme::Cap ? "cap" : "cbp"; }
std::string to_string(Csi c) { return c == Csi::Perfect ? "perfect" : "stochastic"; }

std::string to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::FronthaulCapacity: return "fronthaul_capacity";
    case SweepVariable::Power: return "power";
    case SweepVariable::Coherence: return "coherence";
    case SweepVariable::NumMss: return "num_mss";
    case SweepVariable::RxAntennas: return "rx_antennas";
  }
  return "?";
}

Scheme parse_scheme(std::string_view s) {
  if (s == "cap") return Scheme::Cap;
  if (s == "cbp") return Scheme::Cbp;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

Csi parse_csi(std::string_view s) {
  if (s == "perfect") return Csi::Perfect;
  if (s == "stochastic") return Csi::Stochastic;
  throw std::invalid_argument("unknown csi model '" + std::string(s) + "'");
}

SweepVariable parse_sweep_variable(std::string_view s) {
  for (auto v : {SweepVariable::FronthaulCapacity, SweepVariable::Power, SweepVariable::Coherence,
                 SweepVariable::NumMss, SweepVariable::RxAntennas})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown sweep variable '" + std::string(s) + "'");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

void ExperimentSpec::validate() const {
  require(base.num_rus >= 1 && base.num_mss >= 1, "network needs at least one RU and one MS");
  require(base.tx_per_ru >= 1 && base.rx_per_ms >= 1, "antenna counts must be >= 1");
  require(base.coherence >= 1, "coherence must be >= 1");
  require(!schemes.empty(), "no schemes");
  require(!csi.empty(), "no CSI models");
  require(!values.empty(), "sweep grid is empty");
  require(geometries >= 1, "geometries must be >= 1");
  require(samples >= 2, "samples must be >= 2");
  if (std::find(schemes.begin(), schemes.end(), Scheme::Cbp) != schemes.end()) {
    require(!cluster_sizes.empty(), "CBP requested without cluster sizes");
    for (int n : cluster_sizes) require(n >= 1, "cluster sizes must be >= 1");
  }
  for (double v : values) {
    require(std::isfinite(v), "sweep values must be finite");
    switch (variable) {
      case SweepVariable::FronthaulCapacity: require(v >= 0.0, "fronthaul capacity must be >= 0"); break;
      case SweepVariable::Power: break;
      case SweepVariable::Coherence:
      case SweepVariable::NumMss:
      case SweepVariable::RxAntennas:
        require(is_integer(v) && v >= 1.0, to_string(variable) + " values must be positive integers");
        break;
    }
  }
  optimizer.validate();
  for (double v : values) config_at(v).validate();
}

SystemConfig ExperimentSpec::config_at(double value) const {
  Scenario s = base;
  switch (variable) {
    case SweepVariable::FronthaulCapacity: s.fronthaul_capacity = value; break;
    case SweepVariable::Power: s.power_db = value; break;
    case SweepVariable::Coherence: s.coherence = static_cast<int>(value); break;
    case SweepVariable::NumMss: s.num_mss = static_cast<int>(value); break;
    case SweepVariable::RxAntennas: s.rx_per_ms = static_cast<int>(value); break;
  }
  SystemConfig c = SystemConfig::uniform(s.num_rus, s.num_mss, s.tx_per_ru, s.rx_per_ms, s.fronthaul_capacity,
                                         db_to_linear(s.power_db), s.coherence);
  c.area_side = s.area_side;
  c.ref_distance = s.ref_distance;
  c.pathloss_exponent = s.pathloss_exponent;
  c.scattering_radius = s.scattering_radius;
  return c;
}

ExperimentSpec parse_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("experiment spec: malformed JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"name", "scenario", "schemes", "csi", "cluster_sizes", "sweep", "geometries", "samples", "seed",
                  "optimizer"},
                 "spec");
  ExperimentSpec s;
  try {
    s.name = j.value("name", s.name);
    if (j.contains("scenario")) s.base = scenario_from(j.at("scenario"));
    if (j.contains("schemes")) {
      s.schemes.clear();
      for (const auto& x : j.at("schemes")) s.schemes.push_back(parse_scheme(x.get<std::string>()));
    }
    if (j.contains("csi")) {
      s.csi.clear();
      for (const auto& x : j.at("csi")) s.csi.push_back(parse_csi(x.get<std::string>()));
    }
    s.cluster_sizes = j.value("cluster_sizes", s.cluster_sizes);
    if (j.contains("sweep")) {
      const auto& sw = j.at("sweep");
      reject_unknown(sw, {"variable", "values"}, "sweep");
      s.variable = parse_sweep_variable(sw.at("variable").get<std::string>());
      s.values = sw.at("values").get<std::vector<double>>();
    }
    s.geometries = j.value("geometries", s.geometries);
    s.samples = j.value("samples", s.samples);
    s.seed = j.value("seed", s.seed);
    if (j.contains("optimizer")) s.optimizer = optimizer_from(j.at("optimizer"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json schemes = json::array();
  for (auto x : spec.schemes) schemes.push_back(to_string(x));
  json csi = json::array();
  for (auto x : spec.csi) csi.push_back(to_string(x));
  const json j{{"name", spec.name},
               {"scenario", scenario_json(spec.base)},
               {"schemes", schemes},
               {"csi", csi},
               {"cluster_sizes", spec.cluster_sizes},
               {"sweep", {{"variable", to_string(spec.variable)}, {"values", spec.values}}},
               {"geometries", spec.geometries},
               {"samples", spec.samples},
               {"seed", spec.seed},
               {"optimizer", optimizer_json(spec.optimizer)}};
  return j.dump(2);
}

std::vector<Variant> variants(const ExperimentSpec& spec) {
  std::vector<Variant> out;
  for (auto scheme : spec.schemes) {
    for (auto csi : spec.csi) {
      if (scheme == Scheme::Cap) {
        out.push_back({scheme, csi, 0});
      } else {
        for (int n : spec.cluster_sizes) out.push_back({scheme, csi, n});
      }
    }
  }
  return out;
}

SeedSet derive_seeds(std::uint64_t base, int geometry) {
  const auto g = static_cast<std::uint64_t>(geometry);
  return {linalg::mix_seed(base, kPlacementTag, g), linalg::mix_seed(base, kOptimizerTag, g),
          linalg::mix_seed(base, kEvaluationTag, g)};
}

int SweepResult::failures() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.ok; }));
}

ErgodicEstimate evaluate_variant(const SystemConfig& config, const ChannelStatistics& stats, const Variant& variant,
                                 const SsumOptions& optimizer, const SeedSet& seeds, int samples, int workers) {
  SsumOptions opt = optimizer;
  opt.seed = seeds.optimizer;
  const EvaluationOptions eval{samples, seeds.evaluation, workers};
  if (variant.scheme == Scheme::Cap) {
    if (variant.csi == Csi::Perfect) return ergodic_sum_rate_perfect_cap(config, stats, opt, eval);
    const CapSolution s = optimize_cap_stochastic(config, stats, opt);
    return ergodic_sum_rate(config, stats, s, eval);
  }
  if (variant.csi == Csi::Perfect)
    return ergodic_sum_rate_perfect_cbp(config, stats, variant.cluster_size, opt, eval);
  const auto clusters = assign_clusters_stochastic(stats, variant.cluster_size);
  const CbpSolution s = optimize_cbp_stochastic(config, stats, clusters, opt);
  return ergodic_sum_rate(config, stats, s, eval);
}

SweepResult run_sweep(const ExperimentSpec& spec, int workers, const std::function<void(const ResultRow&)>& progress) {
  spec.validate();
  if (workers < 1) throw std::invalid_argument("run_sweep: workers must be >= 1");
  const auto vars = variants(spec);
  const int nv = static_cast<int>(vars.size());
  const int ng = spec.geometries;
  const int tasks = static_cast<int>(spec.values.size()) * nv * ng;

  SweepResult result;
  result.rows.resize(tasks);
  const int threads = std::min(workers, tasks);
  const int inner = std::max(1, workers / threads);
  std::atomic<int> next{0};
  std::mutex progress_mutex;

  auto work = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= tasks) return;
      const int g = t % ng;
      const int k = (t / ng) % nv;
      const int p = t / (ng * nv);
      ResultRow& row = result.rows[t];
      row.sweep_value = spec.values[p];
      row.scheme = vars[k].scheme;
      row.csi = vars[k].csi;
      row.cluster_size = vars[k].cluster_size;
      row.geometry = g;
      const auto start = std::chrono::steady_clock::now();
      try {
        const SystemConfig config = spec.config_at(row.sweep_value);
        const SeedSet seeds = derive_seeds(spec.seed, g);
        const ChannelStatistics stats = build_statistics(place_nodes(config, seeds.placement), config);
        const ErgodicEstimate e =
            evaluate_variant(config, stats, vars[k], spec.optimizer, seeds, spec.samples, inner);
        row.mean_sum_rate = e.mean;
        row.std_error = e.std_error;
        row.samples = e.samples;
      } catch (const std::exception& e) {
        row.ok = false;
        row.message = e.what();
        row.mean_sum_rate = std::numeric_limits<double>::quiet_NaN();
        row.std_error = std::numeric_limits<double>::quiet_NaN();
      }
      row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(row);
      }
    }
  };

  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  // task index order is already (value, variant, geometry)
  result.summary = summarize(result.rows);
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<double> se2;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.sweep_value == r.sweep_value && s.scheme == r.scheme && s.csi == r.csi &&
             s.cluster_size == r.cluster_size;
    });
    if (it == out.end()) {
      out.push_back({r.sweep_value, r.scheme, r.csi, r.cluster_size, 0, 0, 0.0, 0.0});
      se2.push_back(0.0);
      it = out.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - out.begin());
    if (!r.ok) {
      ++it->failures;
      continue;
    }
    ++it->geometries;
    it->mean_sum_rate += r.mean_sum_rate;
    se2[idx] += r.std_error * r.std_error;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& s = out[k];
    if (s.geometries == 0) {
      s.mean_sum_rate = std::numeric_limits<double>::quiet_NaN();
      s.std_error = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    s.mean_sum_rate /= s.geometries;
    s.std_error = std::sqrt(se2[k]) / s.geometries;
  }
  return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << kResultsHeader << '\n';
  for (const auto& r : rows) {
    os << format_decimal(r.sweep_value) << ',' << to_string(r.scheme) << ',' << to_string(r.csi) << ','
       << r.cluster_size << ',' << r.geometry << ',' << format_decimal(r.mean_sum_rate) << ','
       << format_decimal(r.std_error) << ',' << r.samples << ',' << (r.ok ? "ok" : "failed") << ','
       << quoted(r.message) << '\n';
  }
  return os.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "sweep_value,scheme,csi,cluster_size,geometries,failures,mean_sum_rate,std_error\n";
  for (const auto& r : rows) {
    os << format_decimal(r.sweep_value) << ',' << to_string(r.scheme) << ',' << to_string(r.csi) << ','
       << r.cluster_size << ',' << r.geometries << ',' << r.failures << ',' << format_decimal(r.mean_sum_rate)
       << ',' << format_decimal(r.std_error) << '\n';
  }
  return os.str();
}

std::string timings_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "sweep_value,scheme,csi,cluster_size,geometry,wall_time_s\n";
  for (const auto& r : rows) {
    os << format_decimal(r.sweep_value) << ',' << to_string(r.scheme) << ',' << to_string(r.csi) << ','
       << r.cluster_size << ',' << r.geometry << ',' << format_decimal(r.wall_time) << '\n';
  }
  return os.str();
}

std::vector<ResultRow> parse_results_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw std::invalid_argument("results: unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw std::invalid_argument("results: expected 10 fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.sweep_value = parse_double(f[0]);
    r.scheme = parse_scheme(f[1]);
    r.csi = parse_csi(f[2]);
    r.cluster_size = std::stoi(f[3]);
    r.geometry = std::stoi(f[4]);
    r.mean_sum_rate = parse_double(f[5]);
    r.std_error = parse_double(f[6]);
    r.samples = std::stoi(f[7]);
    if (f[8] != "ok" && f[8] != "failed") throw std::invalid_argument("results: bad status '" + f[8] + "'");
    r.ok = f[8] == "ok";
    r.message = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string sidecar_json(const ExperimentSpec& spec) {
  json seeds = json::array();
  for (int g = 0; g < spec.geometries; ++g) {
    const SeedSet s = derive_seeds(spec.seed, g);
    seeds.push_back({{"geometry", g}, {"placement", s.placement}, {"optimizer", s.optimizer},
                     {"evaluation", s.evaluation}});
  }
  const json j{{"format", "cran-sweep-sidecar"},
               {"version", 1},
               {"spec", json::parse(spec_to_json(spec))},
               {"seeds", seeds},
               {"files", {"results.csv", "summary.csv", "timings.csv"}}};
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_sidecar(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("sidecar: malformed JSON: ") + e.what());
  }
  if (j.value("format", "") != "cran-sweep-sidecar" || j.value("version", 0) != 1)
    throw std::invalid_argument("sidecar: unrecognized format");
  ExperimentSpec spec = parse_spec(j.at("spec").dump());
  const auto& seeds = j.at("seeds");
  if (static_cast<int>(seeds.size()) != spec.geometries)
    throw std::invalid_argument("sidecar: seed list does not match geometry count");
  for (int g = 0; g < spec.geometries; ++g) {
    const SeedSet s = derive_seeds(spec.seed, g);
    const auto& r = seeds[g];
    if (r.at("placement").get<std::uint64_t>() != s.placement ||
        r.at("optimizer").get<std::uint64_t>() != s.optimizer ||
        r.at("evaluation").get<std::uint64_t>() != s.evaluation)
      throw std::invalid_argument("sidecar: recorded seeds for geometry " + std::to_string(g) +
                                  " differ from this build's derivation");
  }
  return spec;
}

OutputFiles emit_results(const ExperimentSpec& spec, const SweepResult& result, const std::filesystem::path& dir) {
  if (result.rows.empty()) throw std::invalid_argument("emit_results: empty table");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  OutputFiles f{dir / "results.csv", dir / "summary.csv", dir / "timings.csv", dir / "sidecar.json"};
  write_file(f.results, results_csv(result.rows));
  write_file(f.summary, summary_csv(result.summary));
  write_file(f.timings, timings_csv(result.rows));
  write_file(f.sidecar, sidecar_json(spec));
  return f;
}

}  // namespace cran
