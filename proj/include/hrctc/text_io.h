#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hrctc {

// Shortest decimal form that parses back to the same double.
std::string format_real(double value);

// Strict parsers; throw ParseError naming `what` on failure.
double parse_real(std::string_view text, std::string_view what = "number");
long long parse_int(std::string_view text, std::string_view what = "integer");

std::vector<std::string> split_whitespace(std::string_view line);
std::string trim(std::string_view text);

}  // namespace hrctc
