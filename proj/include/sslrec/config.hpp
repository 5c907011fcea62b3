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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sslrec/datahub.hpp"
#include "sslrec/engine.hpp"
#include "sslrec/error.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/models.hpp"

// Experiment configuration in YAML, restricted to sections of scalars and
// flat lists. Unknown keys are errors.

namespace sslrec {

// ---------------------------------------------------------------------------
// Document tree
// ---------------------------------------------------------------------------

struct ConfigScalar {
  std::string text;
  bool quoted = false;
  std::size_t line = 0;
};

struct ConfigNode;
using ConfigList = std::vector<ConfigScalar>;
using ConfigMap = std::vector<std::pair<std::string, ConfigNode>>;

struct ConfigNode {
  std::variant<ConfigScalar, ConfigList, ConfigMap> value;
  std::size_t line = 0;

  bool is_scalar() const { return std::holds_alternative<ConfigScalar>(value); }
  bool is_list() const { return std::holds_alternative<ConfigList>(value); }
  bool is_map() const { return std::holds_alternative<ConfigMap>(value); }
};

namespace detail {

[[noreturn]] inline void config_fail(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline std::size_t line_of(const YAML::Node& n) { return static_cast<std::size_t>(n.Mark().line) + 1; }

inline ConfigScalar to_scalar(const YAML::Node& n) {
  // yaml-cpp tags quoted scalars with "!" and leaves plain ones as "?"
  return {n.Scalar(), n.Tag() == "!", line_of(n)};
}

inline ConfigNode to_node(const YAML::Node& n, std::size_t depth) {
  const std::size_t line = line_of(n);
  if (n.IsScalar()) return {to_scalar(n), line};
  if (n.IsSequence()) {
    ConfigList items;
    for (const auto& item : n) {
      if (!item.IsScalar()) config_fail(line_of(item), "list items must be scalars");
      items.push_back(to_scalar(item));
    }
    return {items, line};
  }
  if (n.IsMap()) {
    if (depth >= 2) config_fail(line, "nesting too deep");
    ConfigMap map;
    for (const auto& kv : n) {
      if (!kv.first.IsScalar()) config_fail(line_of(kv.first), "keys must be scalars");
      const std::string key = kv.first.Scalar();
      for (const auto& [k, v] : map)
        if (k == key) config_fail(line_of(kv.first), "duplicate key '" + key + "'");
      auto child = to_node(kv.second, depth + 1);
      child.line = line_of(kv.first);
      map.emplace_back(key, std::move(child));
    }
    return {map, line};
  }
  config_fail(line, "missing value");
}

}  // namespace detail

/// Parses YAML text into a tree whose root is a mapping of at most two levels
/// with scalar or flat-list leaves.
inline ConfigMap parse_config_tree(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    detail::config_fail(static_cast<std::size_t>(e.mark.line) + 1, e.msg);
  }
  if (!root || root.IsNull()) return {};
  if (!root.IsMap()) detail::config_fail(detail::line_of(root), "top level must be a mapping");
  return std::get<ConfigMap>(detail::to_node(root, 0).value);
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  DataOptions data;
  ModelParams model;
  TrainConfig train;
  std::optional<TuneGrid> tune;
  std::filesystem::path output;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string delimiter_name(const std::string& d) {
  if (d == "\t") return "tab";
  if (d == " ") return "space";
  if (d == ",") return "comma";
  return "";
}

inline std::string delimiter_from_name(const std::string& s) {
  if (s == "tab") return "\t";
  if (s == "space") return " ";
  if (s == "comma") return ",";
  return s;
}

class ValueReader {
 public:
  ValueReader(std::string key, const ConfigNode& node) : key_(std::move(key)), node_(node) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(key_ + " (line " + std::to_string(node_.line) + "): " + msg);
  }

  const ConfigScalar& scalar() const {
    if (!node_.is_scalar()) fail("expected a single value");
    return std::get<ConfigScalar>(node_.value);
  }

  const ConfigList& list() const {
    if (!node_.is_list()) fail("expected a list");
    return std::get<ConfigList>(node_.value);
  }

  std::string string() const { return scalar().text; }

  double real(const ConfigScalar& s) const {
    auto v = s.quoted ? std::nullopt : parse_real(s.text);
    if (!v || !std::isfinite(*v)) fail("expected a real number, got '" + s.text + "'");
    return *v;
  }
  double real() const { return real(scalar()); }

  std::uint64_t count(const ConfigScalar& s) const {
    auto v = s.quoted ? std::nullopt : parse_integer<std::uint64_t>(s.text);
    if (!v) fail("expected a nonnegative integer, got '" + s.text + "'");
    return *v;
  }
  std::uint64_t count() const { return count(scalar()); }

  double real_in(double lo, double hi, bool lo_open, bool hi_open) const {
    const double v = real();
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    if (!ok) fail("value " + scalar().text + " out of range");
    return v;
  }

  std::uint64_t positive_count() const {
    const auto v = count();
    if (v == 0) fail("must be positive");
    return v;
  }

  const ConfigNode& node() const { return node_; }

 private:
  std::string key_;
  const ConfigNode& node_;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Assigns one leaf value. Returns false for an unknown (section, key).
inline bool assign_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                       const ConfigNode& node) {
  const ValueReader r(section + "." + key, node);
  if (section == "data") {
    if (key == "path") cfg.data.path = r.string();
    else if (key == "columns") {
      cfg.data.layout.columns.clear();
      for (const auto& s : r.list()) {
        try {
          cfg.data.layout.columns.push_back(parse_column(s.text));
        } catch (const ConfigError& e) {
          r.fail(e.what());
        }
      }
      try {
        cfg.data.layout.validate();
      } catch (const ConfigError& e) {
        r.fail(e.what());
      }
    } else if (key == "delimiter") {
      cfg.data.layout.delimiter = delimiter_from_name(r.string());
      if (cfg.data.layout.delimiter.empty()) r.fail("empty delimiter");
    } else if (key == "max_malformed") cfg.data.layout.max_malformed_fraction = r.real_in(0, 1, false, false);
    else if (key == "min_rating") cfg.data.min_rating = r.real();
    else if (key == "kcore") cfg.data.kcore = r.positive_count();
    else if (key == "seed") cfg.data.seed = r.count();
    else if (key == "ratios") {
      const auto& l = r.list();
      if (l.size() != 3) r.fail("expected three ratios [train, validation, test]");
      cfg.data.ratios = {r.real(l[0]), r.real(l[1]), r.real(l[2])};
      try {
        cfg.data.ratios.validate();
      } catch (const ConfigError& e) {
        r.fail(e.what());
      }
    } else return false;
    return true;
  }
  if (section == "model") {
    if (key == "name") {
      try {
        cfg.model.kind = parse_model_kind(r.string());
      } catch (const ConfigError& e) {
        r.fail(e.what());
      }
    } else if (key == "layers") cfg.model.layers = r.count();
    else if (key == "dim") cfg.model.dim = r.positive_count();
    else if (key == "ssl_weight") cfg.model.ssl_weight = r.real_in(0, kInf, false, true);
    else if (key == "temperature") cfg.model.temperature = r.real_in(0, kInf, true, true);
    else if (key == "dropout") cfg.model.dropout = r.real_in(0, 1, false, true);
    else if (key == "noise") cfg.model.noise = r.real_in(0, kInf, true, true);
    else if (key == "uniformity_weight") cfg.model.uniformity_weight = r.real_in(0, kInf, false, true);
    else return false;
    if (key != "name" && key != "layers" && key != "dim") {
      const auto allowed = ModelParams::specific_fields(cfg.model.kind);
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        r.fail("not a parameter of model " + model_name(cfg.model.kind));
    }
    return true;
  }
  if (section == "train") {
    if (key == "lr") cfg.train.lr = r.real_in(0, kInf, true, true);
    else if (key == "batch") cfg.train.batch = r.positive_count();
    else if (key == "max_epochs") cfg.train.max_epochs = r.positive_count();
    else if (key == "eval_interval") cfg.train.eval_interval = r.positive_count();
    else if (key == "patience") cfg.train.patience = r.positive_count();
    else if (key == "reg") cfg.model.reg = r.real_in(0, kInf, false, true);
    else if (key == "seed") cfg.train.seed = r.count();
    else return false;
    return true;
  }
  if (section == "eval") {
    if (key == "cutoffs") {
      cfg.train.cutoffs.clear();
      for (const auto& s : r.list()) cfg.train.cutoffs.push_back(r.count(s));
      try {
        validate_cutoffs(cfg.train.cutoffs);
      } catch (const ConfigError& e) {
        r.fail(e.what());
      }
    } else if (key == "user_batch") cfg.train.user_batch = r.positive_count();
    else if (key == "objective") cfg.train.objective = r.string();
    else return false;
    return true;
  }
  return false;
}

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& known_keys() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> keys{
      {"data", {"path", "columns", "delimiter", "min_rating", "kcore", "ratios", "seed", "max_malformed"}},
      {"model", {"name", "layers", "dim", "ssl_weight", "temperature", "dropout", "noise", "uniformity_weight"}},
      {"train", {"lr", "batch", "max_epochs", "eval_interval", "patience", "reg", "seed"}},
      {"eval", {"cutoffs", "user_batch", "objective"}},
  };
  return keys;
}

/// Resolves a grid key ("train.lr" or a bare "lr") to (section, key).
inline std::optional<std::pair<std::string, std::string>> resolve_grid_key(const std::string& name) {
  const auto dot = name.find('.');
  for (const auto& [section, keys] : known_keys()) {
    for (const auto& k : keys) {
      if (dot != std::string::npos ? (name.substr(0, dot) == section && name.substr(dot + 1) == k) : name == k)
        return std::make_pair(section, k);
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Applies one "section.key" (or bare key) override given as scalar text, as
/// used by the tuner for each grid point.
inline void apply_override(ExperimentConfig& cfg, const std::string& name, const std::string& value) {
  auto resolved = detail::resolve_grid_key(name);
  if (!resolved) throw ConfigError("unknown hyperparameter '" + name + "'");
  ConfigNode node{ConfigScalar{value, false, 0}, 0};
  detail::assign_key(cfg, resolved->first, resolved->second, node);
  cfg.model.validate();
  cfg.train.validate();
}

/// Parses configuration text; defaults are filled for every absent key.
inline ExperimentConfig parse_config_text(const std::string& text) {
  const auto root = parse_config_tree(text);
  ExperimentConfig cfg;
  const ConfigMap* model_section = nullptr;
  const ConfigNode* tune_node = nullptr;
  bool have_path = false;
  bool have_name = false;
  bool have_train_seed = false;
  for (const auto& [section, node] : root) {
    if (section == "output") {
      cfg.output = detail::ValueReader("output", node).string();
      continue;
    }
    if (section == "tune") {
      tune_node = &node;
      continue;
    }
    const bool known = std::any_of(detail::known_keys().begin(), detail::known_keys().end(),
                                   [&](const auto& s) { return s.first == section; });
    if (!known) throw ConfigError("unknown key '" + section + "' (line " + std::to_string(node.line) + ")");
    if (!node.is_map())
      throw ConfigError(section + " (line " + std::to_string(node.line) + "): expected a mapping");
    if (section == "model") model_section = &std::get<ConfigMap>(node.value);
  }
  // The model name decides which model keys are legal and their defaults.
  ModelKind kind = ModelKind::lightgcn;
  if (model_section) {
    for (const auto& [key, node] : *model_section) {
      if (key == "name") {
        ExperimentConfig probe;
        detail::assign_key(probe, "model", "name", node);
        kind = probe.model.kind;
        have_name = true;
      }
    }
  }
  cfg.model = ModelParams::defaults(kind);
  for (const auto& [section, node] : root) {
    if (section == "output" || section == "tune") continue;
    for (const auto& [key, value] : std::get<ConfigMap>(node.value)) {
      if (value.is_map())
        throw ConfigError(section + "." + key + " (line " + std::to_string(value.line) + "): nesting too deep");
      if (!detail::assign_key(cfg, section, key, value))
        throw ConfigError("unknown key '" + section + "." + key + "' (line " + std::to_string(value.line) + ")");
      if (section == "data" && key == "path") have_path = true;
      if (section == "train" && key == "seed") have_train_seed = true;
    }
  }
  if (!have_path) throw ConfigError("data.path is required");
  if (!have_name) throw ConfigError("model.name is required");
  if (!have_train_seed) cfg.train.seed = cfg.data.seed;
  try {
    cfg.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("eval: ") + e.what());
  }
  cfg.model.validate();

  if (tune_node) {
    if (!tune_node->is_map())
      throw ConfigError("tune (line " + std::to_string(tune_node->line) + "): expected a mapping");
    TuneGrid grid;
    grid.objective = cfg.train.objective;
    for (const auto& [key, node] : std::get<ConfigMap>(tune_node->value)) {
      const detail::ValueReader r("tune." + key, node);
      auto resolved = detail::resolve_grid_key(key);
      if (!resolved) r.fail("unknown hyperparameter");
      if (resolved->second == "name" || resolved->second == "seed" || resolved->first == "data" ||
          resolved->second == "objective")
        r.fail("cannot be tuned");
      std::vector<std::string> values;
      for (const auto& s : r.list()) {
        ExperimentConfig probe = cfg;
        try {
          apply_override(probe, key, s.text);
        } catch (const ConfigError& e) {
          r.fail(e.what());
        }
        values.push_back(s.text);
      }
      if (values.empty()) r.fail("empty candidate list");
      grid.axes.emplace_back(key, std::move(values));
    }
    if (!grid.axes.empty()) cfg.tune = std::move(grid);
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace detail {

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

}  // namespace detail

/// Fully resolved configuration in the same syntax parse_config reads.
inline std::string snapshot(const ExperimentConfig& cfg) {
  std::ostringstream o;
  const auto& d = cfg.data;
  o << "data:\n";
  o << "  path: " << detail::quote(d.path.string()) << "\n";
  o << "  columns: [";
  for (std::size_t k = 0; k < d.layout.columns.size(); ++k) o << (k ? ", " : "") << column_name(d.layout.columns[k]);
  o << "]\n";
  const auto dname = detail::delimiter_name(d.layout.delimiter);
  o << "  delimiter: " << (dname.empty() ? detail::quote(d.layout.delimiter) : dname) << "\n";
  o << "  max_malformed: " << format_real(d.layout.max_malformed_fraction) << "\n";
  o << "  min_rating: " << format_real(d.min_rating) << "\n";
  o << "  kcore: " << d.kcore << "\n";
  o << "  ratios: [" << format_real(d.ratios.train) << ", " << format_real(d.ratios.validation) << ", "
    << format_real(d.ratios.test) << "]\n";
  o << "  seed: " << d.seed << "\n";
  const auto& m = cfg.model;
  o << "model:\n";
  o << "  name: " << model_name(m.kind) << "\n";
  o << "  layers: " << m.layers << "\n";
  o << "  dim: " << m.dim << "\n";
  if (m.ssl_weight) o << "  ssl_weight: " << format_real(*m.ssl_weight) << "\n";
  if (m.temperature) o << "  temperature: " << format_real(*m.temperature) << "\n";
  if (m.dropout) o << "  dropout: " << format_real(*m.dropout) << "\n";
  if (m.noise) o << "  noise: " << format_real(*m.noise) << "\n";
  if (m.uniformity_weight) o << "  uniformity_weight: " << format_real(*m.uniformity_weight) << "\n";
  const auto& t = cfg.train;
  o << "train:\n";
  o << "  lr: " << format_real(t.lr) << "\n";
  o << "  batch: " << t.batch << "\n";
  o << "  max_epochs: " << t.max_epochs << "\n";
  o << "  eval_interval: " << t.eval_interval << "\n";
  o << "  patience: " << t.patience << "\n";
  o << "  reg: " << format_real(m.reg) << "\n";
  o << "  seed: " << t.seed << "\n";
  o << "eval:\n";
  o << "  cutoffs: [";
  for (std::size_t k = 0; k < t.cutoffs.size(); ++k) o << (k ? ", " : "") << t.cutoffs[k];
  o << "]\n";
  o << "  user_batch: " << t.user_batch << "\n";
  o << "  objective: " << t.objective << "\n";
  if (cfg.tune) {
    o << "tune:\n";
    for (const auto& [name, values] : cfg.tune->axes) {
      o << "  " << name << ": [";
      for (std::size_t k = 0; k < values.size(); ++k) o << (k ? ", " : "") << values[k];
      o << "]\n";
    }
  }
  if (!cfg.output.empty()) o << "output: " << detail::quote(cfg.output.string()) << "\n";
  return o.str();
}

}  // namespace sslrec
