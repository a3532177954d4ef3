#include "cran/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include <json.hpp>

namespace cran {

using nlohmann::json;

namespace {

json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("matrix: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& e = row[c];
      if (!e.is_array() || e.size() != 2) throw std::invalid_argument("matrix: entries must be [re, im]");
      m(r, c) = Complex(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

json config_as_json(const SystemConfig& c) {
  return json{{"num_rus", c.num_rus},
              {"num_mss", c.num_mss},
              {"tx_antennas", c.tx_antennas},
              {"rx_antennas", c.rx_antennas},
              {"streams", c.streams},
              {"coherence_length", c.coherence_length},
              {"fronthaul_capacity", c.fronthaul_capacity},
              {"power_budget", c.power_budget},
              {"rate_weights", c.rate_weights},
              {"area_side", c.area_side},
              {"ref_distance", c.ref_distance},
              {"pathloss_exponent", c.pathloss_exponent},
              {"scattering_radius", c.scattering_radius}};
}

SystemConfig config_from_tree(const json& j) {
  SystemConfig c;
  j.at("num_rus").get_to(c.num_rus);
  j.at("num_mss").get_to(c.num_mss);
  j.at("tx_antennas").get_to(c.tx_antennas);
  j.at("rx_antennas").get_to(c.rx_antennas);
  c.streams = j.value("streams", c.rx_antennas);
  c.coherence_length = j.value("coherence_length", 1);
  j.at("fronthaul_capacity").get_to(c.fronthaul_capacity);
  j.at("power_budget").get_to(c.power_budget);
  c.rate_weights = j.value("rate_weights", std::vector<double>(c.num_mss, 1.0));
  c.area_side = j.value("area_side", c.area_side);
  c.ref_distance = j.value("ref_distance", c.ref_distance);
  c.pathloss_exponent = j.value("pathloss_exponent", c.pathloss_exponent);
  c.scattering_radius = j.value("scattering_radius", c.scattering_radius);
  c.validate();
  return c;
}


json parse(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<int> int_vector(const json& j, const char* key) { return j.at(key).get<std::vector<int>>(); }

}  // namespace

std::string to_json(const SystemConfig& config) { return config_as_json(config).dump(2); }

SystemConfig config_from_json(std::string_view text) { return config_from_tree(parse(text)); }

std::string to_json(const ChannelStatistics& stats) {
  json links = json::array();
  for (int j = 0; j < stats.num_mss; ++j) {
    for (int i = 0; i < stats.num_rus; ++i) {
      const auto& l = stats.link(j, i);
      links.push_back({{"ms", j},
                       {"ru", i},
                       {"pathloss", l.pathloss},
                       {"angle", l.angle},
                       {"spread", l.spread},
                       {"distance", l.distance},
                       {"tx_correlation", matrix_to_json(l.tx_correlation)},
                       {"rx_correlation", matrix_to_json(l.rx_correlation)}});
    }
  }
  return json{{"num_rus", stats.num_rus}, {"num_mss", stats.num_mss}, {"links", links}}.dump(2);
}

ChannelStatistics statistics_from_json(std::string_view text) {
  const json j = parse(text);
  ChannelStatistics s;
  j.at("num_rus").get_to(s.num_rus);
  j.at("num_mss").get_to(s.num_mss);
  if (s.num_rus < 1 || s.num_mss < 1) throw std::invalid_argument("statistics: empty network");
  s.links.resize(static_cast<std::size_t>(s.num_rus) * s.num_mss);
  const auto& links = j.at("links");
  if (links.size() != s.links.size()) throw std::invalid_argument("statistics: wrong number of links");
  for (const auto& l : links) {
    const int ms = l.at("ms").get<int>();
    const int ru = l.at("ru").get<int>();
    if (ms < 0 || ms >= s.num_mss || ru < 0 || ru >= s.num_rus)
      throw std::invalid_argument("statistics: link index out of range");
    auto& out = s.link(ms, ru);
    out.pathloss = l.at("pathloss").get<double>();
    out.angle = l.value("angle", 0.0);
    out.spread = l.value("spread", 0.0);
    out.distance = l.value("distance", 0.0);
    out.tx_correlation = matrix_from_json(l.at("tx_correlation"));
    out.rx_correlation = matrix_from_json(l.at("rx_correlation"));
  }
  return s;
}

std::string to_json(const ChannelRealization& h) {
  return json{{"rx_antennas", h.rx_antennas()},
              {"tx_antennas", h.tx_antennas()},
              {"stacked", matrix_to_json(h.stacked())}}
      .dump(2);
}

ChannelRealization realization_from_json(std::string_view text) {
  const json j = parse(text);
  return ChannelRealization(int_vector(j, "rx_antennas"), int_vector(j, "tx_antennas"),
                            matrix_from_json(j.at("stacked")));
}

std::string format_decimal(double value) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  char buf[64];
  for (int p = 9; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%#.*g", p, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

}  // namespace cran
