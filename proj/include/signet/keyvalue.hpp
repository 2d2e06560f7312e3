#pragma once

// UTF-8 `key = value` documents with `#` comments. Used for the embedded
// architecture description, checkpoint metadata, corpus manifests and run
// configuration files.

#include <charconv>
#include <cstdio>
#include <map>

#include "signet/common.hpp"

namespace signet {

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) fail("line ", line_no, ": expected 'key = value', got '", stripped, "'");
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    if (key.empty()) fail("line ", line_no, ": empty key");
    out[key] = trim(std::string_view(stripped).substr(eq + 1));
  }
  return out;
}

inline std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline double parse_double(const std::string& s, std::string_view what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) fail(what, ": not a number: '", s, "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(what, ": not a non-negative integer: '", s, "'");
  return v;
}

inline const std::string& require_key(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail("missing key '", key, "'");
  return it->second;
}

}  // namespace signet
