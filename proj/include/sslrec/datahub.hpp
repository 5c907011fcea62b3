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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sslrec/error.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/rng.hpp"
#include "sslrec/sparse.hpp"

namespace sslrec {

// ---------------------------------------------------------------------------
// Raw interactions and loading
// ---------------------------------------------------------------------------

struct RawInteraction {
  std::string user_key;
  std::string item_key;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;

  bool operator==(const RawInteraction&) const = default;
};

enum class Column { user, item, rating, timestamp, skip };

inline Column parse_column(const std::string& name) {
  if (name == "user") return Column::user;
  if (name == "item") return Column::item;
  if (name == "rating") return Column::rating;
  if (name == "timestamp") return Column::timestamp;
  if (name == "_" || name == "skip") return Column::skip;
  throw ConfigError("unknown column name '" + name + "'");
}

inline std::string column_name(Column c) {
  switch (c) {
    case Column::user: return "user";
    case Column::item: return "item";
    case Column::rating: return "rating";
    case Column::timestamp: return "timestamp";
    case Column::skip: return "_";
  }
  return "_";
}

/// Column layout of a delimited interaction file. A delimiter of " " splits
/// on runs of spaces and tabs; anything else is matched literally.
struct ColumnLayout {
  std::vector<Column> columns{Column::user, Column::item};
  std::string delimiter = "\t";
  double max_malformed_fraction = 0.01;

  void validate() const {
    auto count = [&](Column c) { return std::count(columns.begin(), columns.end(), c); };
    if (count(Column::user) != 1 || count(Column::item) != 1)
      throw ConfigError("column layout needs exactly one user and one item column");
    if (count(Column::rating) > 1 || count(Column::timestamp) > 1)
      throw ConfigError("column layout repeats rating or timestamp");
    if (delimiter.empty()) throw ConfigError("empty delimiter");
    if (!(max_malformed_fraction >= 0.0 && max_malformed_fraction <= 1.0))
      throw ConfigError("malformed fraction must lie in [0,1]");
  }

  bool operator==(const ColumnLayout&) const = default;
};

struct LoadStats {
  std::size_t data_rows = 0;
  std::size_t malformed_rows = 0;
  std::size_t first_malformed_line = 0;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, const std::string& delimiter) {
  std::vector<std::string_view> fields;
  if (delimiter == " ") {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i == line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      fields.push_back(line.substr(i, j - i));
      i = j;
    }
    return fields;
  }
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + delimiter.size();
  }
}

inline std::optional<RawInteraction> parse_row(std::string_view line, const ColumnLayout& layout) {
  auto fields = split_fields(line, layout.delimiter);
  if (fields.size() != layout.columns.size()) return std::nullopt;
  RawInteraction row;
  for (std::size_t c = 0; c < fields.size(); ++c) {
    switch (layout.columns[c]) {
      case Column::user: row.user_key = std::string(fields[c]); break;
      case Column::item: row.item_key = std::string(fields[c]); break;
      case Column::rating: {
        auto v = parse_real(fields[c]);
        if (!v || !std::isfinite(*v)) return std::nullopt;
        row.rating = *v;
        break;
      }
      case Column::timestamp: {
        auto v = parse_integer<std::int64_t>(fields[c]);
        if (!v) return std::nullopt;
        row.timestamp = *v;
        break;
      }
      case Column::skip: break;
    }
  }
  if (row.user_key.empty() || row.item_key.empty()) return std::nullopt;
  return row;
}

}  // namespace detail

/// Reads one interaction per data line. Blank lines and lines starting with
/// '#' are ignored. Malformed rows are dropped and counted in `stats`; more
/// than layout.max_malformed_fraction of them is a FormatError.
inline std::vector<RawInteraction> load_interactions(const std::filesystem::path& path, const ColumnLayout& layout,
                                                     LoadStats* stats = nullptr) {
  layout.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read interactions file " + path.string());
  std::vector<RawInteraction> rows;
  LoadStats local;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    ++local.data_rows;
    if (auto row = detail::parse_row(line, layout)) {
      rows.push_back(std::move(*row));
    } else {
      if (local.malformed_rows == 0) local.first_malformed_line = line_no;
      ++local.malformed_rows;
    }
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
  if (stats) *stats = local;
  if (local.data_rows > 0 && static_cast<double>(local.malformed_rows) >
                                 layout.max_malformed_fraction * static_cast<double>(local.data_rows)) {
    throw FormatError(path.string() + ": " + std::to_string(local.malformed_rows) + " of " +
                      std::to_string(local.data_rows) + " rows malformed (first at line " +
                      std::to_string(local.first_malformed_line) + ")");
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Keeps rows with rating >= min_rating. Rows without a rating are kept.
inline std::vector<RawInteraction> filter_low_rating(std::vector<RawInteraction> rows, double min_rating) {
  std::erase_if(rows, [&](const RawInteraction& r) { return r.rating && *r.rating < min_rating; });
  return rows;
}

/// Collapses repeated (user, item) pairs to their first occurrence.
inline std::vector<RawInteraction> dedup_interactions(std::vector<RawInteraction> rows) {
  std::unordered_set<std::string> seen;
  seen.reserve(rows.size());
  std::vector<RawInteraction> out;
  out.reserve(rows.size());
  for (auto& r : rows) {
    std::string key = r.user_key;
    key.push_back('\0');
    key += r.item_key;
    if (seen.insert(std::move(key)).second) out.push_back(std::move(r));
  }
  return out;
}

/// Iteratively removes users and items with fewer than k remaining rows until
/// every survivor has degree >= k. Survivors keep their input order.
inline std::vector<RawInteraction> kcore_filter(std::vector<RawInteraction> rows, std::size_t k) {
  if (k == 0) throw ConfigError("kcore_filter: k must be >= 1");
  std::unordered_map<std::string, std::size_t> user_ids, item_ids;
  std::vector<std::size_t> row_user(rows.size()), row_item(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    row_user[r] = user_ids.try_emplace(rows[r].user_key, user_ids.size()).first->second;
    row_item[r] = item_ids.try_emplace(rows[r].item_key, item_ids.size()).first->second;
  }
  const std::size_t n_users = user_ids.size();
  // Node ids: users [0, n_users), items after.
  std::vector<std::size_t> degree(n_users + item_ids.size(), 0);
  std::vector<std::vector<std::size_t>> incident(degree.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ++degree[row_user[r]];
    ++degree[n_users + row_item[r]];
    incident[row_user[r]].push_back(r);
    incident[n_users + row_item[r]].push_back(r);
  }
  std::vector<char> removed_node(degree.size(), 0), removed_row(rows.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t v = 0; v < degree.size(); ++v) {
    if (degree[v] < k) {
      removed_node[v] = 1;
      queue.push_back(v);
    }
  }
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t r : incident[v]) {
      if (removed_row[r]) continue;
      removed_row[r] = 1;
      const std::size_t other = (v < n_users) ? n_users + row_item[r] : row_user[r];
      if (--degree[other] < k && !removed_node[other]) {
        removed_node[other] = 1;
        queue.push_back(other);
      }
    }
  }
  std::vector<RawInteraction> out;
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (!removed_row[r]) out.push_back(std::move(rows[r]));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

using ItemList = std::vector<std::size_t>;

/// Users and items with dense ids, a per-user train/validation/test split and
/// the bipartite adjacency built from train. Item i is node n_users + i.
struct InteractionDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<ItemList> train;       // per user, ascending
  std::vector<ItemList> validation;  // per user, ascending
  std::vector<ItemList> test;        // per user, ascending
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;
  CsrMatrix raw_adjacency;  // unnormalized, entries 1
  CsrMatrix adjacency;      // normalize_sym(raw_adjacency)

  std::size_t n_nodes() const { return n_users + n_items; }

  std::size_t count(const std::vector<ItemList>& part) const {
    std::size_t n = 0;
    for (const auto& l : part) n += l.size();
    return n;
  }
  std::size_t n_train() const { return count(train); }

  /// Train interactions as (user, item) pairs in ascending order.
  std::vector<std::pair<std::size_t, std::size_t>> train_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n_train());
    for (std::size_t u = 0; u < n_users; ++u)
      for (std::size_t i : train[u]) pairs.emplace_back(u, i);
    return pairs;
  }
};

/// Symmetric 0/1 bipartite matrix with (u, M+i) and (M+i, u) per train pair.
inline CsrMatrix build_raw_adjacency(std::size_t n_users, std::size_t n_items, const std::vector<ItemList>& train) {
  std::vector<CooEntry> entries;
  for (std::size_t u = 0; u < train.size(); ++u) {
    for (std::size_t i : train[u]) {
      entries.push_back({u, n_users + i, 1.0});
      entries.push_back({n_users + i, u, 1.0});
    }
  }
  return CsrMatrix::from_coo(n_users + n_items, n_users + n_items, std::move(entries));
}

inline CsrMatrix build_adjacency(const InteractionDataset& dataset) {
  if (dataset.n_train() == 0) throw StructuralError("build_adjacency: empty train set");
  return normalize_sym(build_raw_adjacency(dataset.n_users, dataset.n_items, dataset.train));
}

/// Assembles a dataset from dense ids, validating ranges and disjointness,
/// and builds both adjacencies.
inline InteractionDataset make_dataset(std::size_t n_users, std::size_t n_items, std::vector<ItemList> train,
                                       std::vector<ItemList> validation, std::vector<ItemList> test) {
  InteractionDataset ds;
  ds.n_users = n_users;
  ds.n_items = n_items;
  for (auto* part : {&train, &validation, &test}) {
    if (part->size() > n_users) throw StructuralError("make_dataset: more user lists than users");
    part->resize(n_users);
    for (auto& items : *part) {
      std::sort(items.begin(), items.end());
      if (std::adjacent_find(items.begin(), items.end()) != items.end())
        throw StructuralError("make_dataset: duplicate interaction");
      if (!items.empty() && items.back() >= n_items) throw StructuralError("make_dataset: item id out of range");
    }
  }
  for (std::size_t u = 0; u < n_users; ++u) {
    auto overlaps = [](const ItemList& a, const ItemList& b) {
      std::vector<std::size_t> common;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      return !common.empty();
    };
    if (overlaps(train[u], validation[u]) || overlaps(train[u], test[u]) || overlaps(validation[u], test[u]))
      throw StructuralError("make_dataset: splits overlap for user " + std::to_string(u));
  }
  ds.train = std::move(train);
  ds.validation = std::move(validation);
  ds.test = std::move(test);
  ds.user_keys.resize(n_users);
  ds.item_keys.resize(n_items);
  for (std::size_t u = 0; u < n_users; ++u) ds.user_keys[u] = std::to_string(u);
  for (std::size_t i = 0; i < n_items; ++i) ds.item_keys[i] = std::to_string(i);
  ds.raw_adjacency = build_raw_adjacency(n_users, n_items, ds.train);
  ds.adjacency = normalize_sym(ds.raw_adjacency);
  return ds;
}

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;

  void validate() const {
    if (!(train > 0 && validation > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + validation + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }

  bool operator==(const SplitRatios&) const = default;
};

/// Largest-remainder apportionment of n rows over the three ratios. Ties in
/// the fractional part go to the earlier part (train, then validation).
inline std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * r[k];
    // 1e-9 absorbs representation error, e.g. 10 * 0.7.
    const double floor_v = std::floor(exact + 1e-9);
    counts[k] = static_cast<std::size_t>(floor_v);
    frac[k] = exact - floor_v;
    assigned += counts[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (frac[k] > frac[best]) best = k;
    ++counts[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return counts;
}

/// Per-user random split. Keys are sorted before dense ids are assigned, so
/// the result does not depend on input row order. Users with fewer than three
/// interactions keep everything in train.
inline InteractionDataset split_dataset(const std::vector<RawInteraction>& rows, const SplitRatios& ratios,
                                        std::uint64_t seed) {
  if (rows.empty()) throw StructuralError("split_dataset: no interactions");
  ratios.validate();
  std::vector<std::string> user_keys, item_keys;
  for (const auto& r : rows) {
    user_keys.push_back(r.user_key);
    item_keys.push_back(r.item_key);
  }
  auto unique_sorted = [](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  unique_sorted(user_keys);
  unique_sorted(item_keys);
  auto id_of = [](const std::vector<std::string>& keys, const std::string& k) {
    return static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), k) - keys.begin());
  };
  std::vector<ItemList> by_user(user_keys.size());
  for (const auto& r : rows) by_user[id_of(user_keys, r.user_key)].push_back(id_of(item_keys, r.item_key));

  std::vector<ItemList> train(user_keys.size()), validation(user_keys.size()), test(user_keys.size());
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    auto& items = by_user[u];
    std::sort(items.begin(), items.end());
    if (std::adjacent_find(items.begin(), items.end()) != items.end())
      throw StructuralError("split_dataset: duplicate interaction for user '" + user_keys[u] + "'");
    if (items.size() < 3) {
      train[u] = items;
      continue;
    }
    Rng rng(derive_seed(seed, u));
    rng.shuffle(std::span<std::size_t>(items));
    const auto counts = apportion(items.size(), ratios);
    train[u].assign(items.begin(), items.begin() + counts[0]);
    validation[u].assign(items.begin() + counts[0], items.begin() + counts[0] + counts[1]);
    test[u].assign(items.begin() + counts[0] + counts[1], items.end());
  }
  auto ds = make_dataset(user_keys.size(), item_keys.size(), std::move(train), std::move(validation), std::move(test));
  ds.user_keys = std::move(user_keys);
  ds.item_keys = std::move(item_keys);
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing pipeline and dataset directories
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a of the file contents, hex encoded.
inline std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + hex;
}

struct DataOptions {
  std::filesystem::path path;
  ColumnLayout layout;
  double min_rating = 0.0;
  std::size_t kcore = 10;
  SplitRatios ratios;
  std::uint64_t seed = 2023;

  bool operator==(const DataOptions&) const = default;
};

struct PreprocessResult {
  InteractionDataset dataset;
  KeyValues meta;
  LoadStats load_stats;
};

/// load -> low-rating filter -> dedup -> k-core -> per-user split.
inline PreprocessResult preprocess(const DataOptions& options) {
  PreprocessResult result;
  auto rows = load_interactions(options.path, options.layout, &result.load_stats);
  const std::size_t loaded = rows.size();
  rows = filter_low_rating(std::move(rows), options.min_rating);
  rows = dedup_interactions(std::move(rows));
  rows = kcore_filter(std::move(rows), options.kcore);
  if (rows.empty()) throw StructuralError("preprocess: no interactions survive filtering");
  result.dataset = split_dataset(rows, options.ratios, options.seed);
  auto& m = result.meta;
  const auto& ds = result.dataset;
  m.set("n_users", ds.n_users);
  m.set("n_items", ds.n_items);
  m.set("n_interactions", rows.size());
  m.set("n_train", ds.n_train());
  m.set("n_validation", ds.count(ds.validation));
  m.set("n_test", ds.count(ds.test));
  m.set("rows_loaded", loaded);
  m.set("rows_malformed", result.load_stats.malformed_rows);
  m.set("min_rating", options.min_rating);
  m.set("kcore", options.kcore);
  m.set("ratio_train", options.ratios.train);
  m.set("ratio_validation", options.ratios.validation);
  m.set("ratio_test", options.ratios.test);
  m.set("seed", options.seed);
  m.set("source", options.path.string());
  m.set("source_checksum", file_checksum(options.path));
  return result;
}

namespace detail {

inline void write_pairs(const std::filesystem::path& path, const std::vector<ItemList>& part) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t u = 0; u < part.size(); ++u)
    for (std::size_t i : part[u]) out << u << '\t' << i << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<ItemList> read_pairs(const std::filesystem::path& path, std::size_t n_users) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ItemList> part(n_users);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    auto u = parse_integer<std::size_t>(std::string_view(line).substr(0, tab));
    auto i = tab == std::string::npos ? std::nullopt
                                      : parse_integer<std::size_t>(std::string_view(line).substr(tab + 1));
    if (!u || !i || *u >= n_users)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad id pair");
    part[*u].push_back(*i);
  }
  return part;
}

inline void write_keys(const std::filesystem::path& path, const std::vector<std::string>& keys) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t k = 0; k < keys.size(); ++k) out << keys[k] << '\t' << k << '\n';
}

inline std::vector<std::string> read_keys(const std::filesystem::path& path, std::size_t n) {
  std::vector<std::string> keys(n);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    for (std::size_t k = 0; k < n; ++k) keys[k] = std::to_string(k);
    return keys;
  }
  std::string line;
  while (std::getline(in, line)) {
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) continue;
    auto id = parse_integer<std::size_t>(std::string_view(line).substr(tab + 1));
    if (id && *id < n) keys[*id] = line.substr(0, tab);
  }
  return keys;
}

}  // namespace detail

/// Writes `meta`, `train.tsv`, `val.tsv`, `test.tsv` (dense "user<TAB>item"
/// rows) plus the key maps `users.tsv` and `items.tsv`.
inline void write_dataset(const std::filesystem::path& dir, const InteractionDataset& ds, const KeyValues& meta) {
  std::filesystem::create_directories(dir);
  meta.write(dir / "meta");
  detail::write_pairs(dir / "train.tsv", ds.train);
  detail::write_pairs(dir / "val.tsv", ds.validation);
  detail::write_pairs(dir / "test.tsv", ds.test);
  detail::write_keys(dir / "users.tsv", ds.user_keys);
  detail::write_keys(dir / "items.tsv", ds.item_keys);
}

inline InteractionDataset read_dataset(const std::filesystem::path& dir) {
  const auto meta = KeyValues::read(dir / "meta");
  const std::size_t n_users = meta.get_count("n_users");
  const std::size_t n_items = meta.get_count("n_items");
  auto ds = make_dataset(n_users, n_items, detail::read_pairs(dir / "train.tsv", n_users),
                         detail::read_pairs(dir / "val.tsv", n_users), detail::read_pairs(dir / "test.tsv", n_users));
  ds.user_keys = detail::read_keys(dir / "users.tsv", n_users);
  ds.item_keys = detail::read_keys(dir / "items.tsv", n_items);
  return ds;
}

}  // namespace sslrec
