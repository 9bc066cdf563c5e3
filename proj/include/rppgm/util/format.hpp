#pragma once

#include <span>
#include <string>

namespace rppgm {

// Shortest round-trip decimal, independent of the global locale.
std::string format_double(double value);

// Writes one CSV line (no quoting; fields are numeric or simple tokens).
std::string csv_row(std::span<const std::string> fields);

} // namespace rppgm
