#pragma once

#include "psw/data.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace psw {

/// Comma-delimited, header row required, '.' decimal separator. Empty cells and
/// NA/NaN tokens become NaN. Surrounding double quotes on a field are stripped.
Table read_csv(std::istream& in);
Table read_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const Table& table);

/// Shortest round-trip text for a double ("nan", "inf", "-inf" for non-finite).
std::string format_double(double value);

/// Splits one CSV record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line);

/// Quotes a field if it contains a comma, quote or newline.
std::string csv_field(const std::string& text);

} // namespace psw
