#include "mtf/core/kv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "mtf/core/error.hpp"

namespace mtf {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source) {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
    }
    KeyValue kv{trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)), line_no};
    if (kv.key.empty()) throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = s.find(',', pos);
    out.push_back(trim(s.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos)));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + v + "'");
  }
  return d;
}

long parse_int(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" + v + "'");
  }
  return x;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + std::string(key) + "': expected true/false, got '" + v + "'");
}

std::vector<double> parse_double_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
  std::vector<int> out;
  for (const auto& item : split_list(value)) out.push_back(static_cast<int>(parse_int(key, item)));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace mtf
