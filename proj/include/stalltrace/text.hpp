#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stalltrace {

std::string_view trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view line);

/// Strict full-string parses; throw stalltrace::Error on junk.
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string format_fixed(double v, int decimals);
/// Shortest round-trip text, always with a decimal point ("100.0").
std::string format_seconds(double v);

/// `key = value` lines; blank lines and `#` comments ignored. Duplicate keys are an error.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& origin);

}  // namespace stalltrace
