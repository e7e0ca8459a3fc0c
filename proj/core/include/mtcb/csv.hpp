#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtcb {

/// Splits one CSV record. Handles double-quoted fields with embedded commas
/// and doubled quotes; strips a trailing '\r'. Fields are not trimmed.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

}  // namespace mtcb
