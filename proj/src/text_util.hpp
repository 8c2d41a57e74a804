// Copyright 2026 The purefood Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "purefood/error.hpp"

namespace pf::detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (end == text.size() && line.empty()) break;
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
    std::size_t start = k;
    while (k < line.size() && line[k] != ' ' && line[k] != '\t') ++k;
    if (k > start) out.emplace_back(line.substr(start, k - start));
  }
  return out;
}

inline std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    out.emplace_back(text.substr(start, end == std::string_view::npos ? end : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

inline std::size_t parse_size(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw Error(ErrorKind::config, where + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

inline std::int64_t parse_int(const std::string& v, const std::string& where) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw Error(ErrorKind::config, where + ": expected an integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& v, const std::string& where) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw Error(ErrorKind::config, where + ": expected a number, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::config, where + ": expected a boolean, got '" + v + "'");
}

// Shortest text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::map<std::string, std::string> parse_kv(const std::vector<std::string>& tokens,
                                                   std::size_t first,
                                                   const std::string& where) {
  std::map<std::string, std::string> kv;
  for (std::size_t k = first; k < tokens.size(); ++k) {
    const auto eq = tokens[k].find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::config, where + ": expected key=value, got '" + tokens[k] + "'");
    }
    kv[tokens[k].substr(0, eq)] = tokens[k].substr(eq + 1);
  }
  return kv;
}

inline std::size_t kv_size(const std::map<std::string, std::string>& kv,
                           const std::string& key, const std::string& where) {
  auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorKind::config, where + ": missing " + key);
  return parse_size(it->second, where + " " + key);
}

}  // namespace pf::detail
