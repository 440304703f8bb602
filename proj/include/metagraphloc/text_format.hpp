#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mgl {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of the whole field (surrounding blanks allowed); false on junk.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::string_view trim(std::string_view text);
std::vector<std::string_view> split(std::string_view text, char sep);

/// Joins formatted doubles with `sep`.
std::string join_doubles(const std::vector<double>& values, char sep = ',');

}  // namespace mgl
