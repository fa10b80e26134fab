#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace banditmt {

/// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string csv_field(std::string_view value);

/// Splits one CSV record (no embedded newlines). Throws std::invalid_argument
/// on an unterminated quote.
std::vector<std::string> csv_split(std::string_view line);

}  // namespace banditmt
