#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtf {

/// One `key = value` entry of a flat config text.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// anything else without '=' is a ConfigError naming the line.
std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source = "<config>");

std::string trim(std::string_view s);

/// Comma-separated list, each item trimmed.
std::vector<std::string> split_list(std::string_view s);

double parse_double(std::string_view key, std::string_view value);
long parse_int(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key, std::string_view value);
std::vector<int> parse_int_list(std::string_view key, std::string_view value);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace mtf
