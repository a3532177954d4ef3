#pragma once

// JSON text forms used by fixtures, sidecars and replay. Complex entries are
// [re, im] pairs; matrices are arrays of rows.

#include <string>
#include <string_view>

#include "cran/geometry_channel.hpp"

namespace cran {

std::string to_json(const SystemConfig& config);
SystemConfig config_from_json(std::string_view text);

std::string to_json(const ChannelStatistics& stats);
ChannelStatistics statistics_from_json(std::string_view text);

std::string to_json(const ChannelRealization& h);
ChannelRealization realization_from_json(std::string_view text);

/// Shortest decimal string that parses back to exactly `value`, never fewer
/// than 9 significant digits.
std::string format_decimal(double value);

}  // namespace cran
