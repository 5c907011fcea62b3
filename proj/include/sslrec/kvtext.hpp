/*
 * Copyright 2026 The sslrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <charconv>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sslrec/error.hpp"

namespace sslrec {

/// Shortest decimal form that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_integer(std::string_view s) {
  Int v{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Ordered `key=value` records, one per line. Used for dataset metadata,
/// checkpoint metadata and run reports.
class KeyValues {
 public:
  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    entries_.emplace_back(key, std::move(value));
  }
  void set(const std::string& key, double value) { set(key, format_real(value)); }
  template <std::integral Int>
  void set(const std::string& key, Int value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& get(const std::string& key) const {
    if (const auto* v = find(key)) return *v;
    throw FormatError("missing key '" + key + "'");
  }

  double get_real(const std::string& key) const {
    auto v = parse_real(get(key));
    if (!v) throw FormatError("key '" + key + "' is not a real number");
    return *v;
  }

  std::uint64_t get_count(const std::string& key) const {
    auto v = parse_integer<std::uint64_t>(get(key));
    if (!v) throw FormatError("key '" + key + "' is not a count");
    return *v;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
  }

  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0)
        throw FormatError("key-value line " + std::to_string(line_no) + ": expected key=value");
      kv.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return kv;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_string();
    if (!out) throw IoError("write failed: " + path.string());
  }

  static KeyValues read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace sslrec
