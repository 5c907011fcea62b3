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

#include <gtest/gtest.h>

#include <string>

#include "oracles.hpp"
#include "sslrec/config.hpp"

using sslrec::ExperimentConfig;
using sslrec::ModelKind;
using sslrec::parse_config_text;

namespace {

const char* kMinimal = "data:\n  path: raw.tsv\nmodel:\n  name: lightgcn\n";

/// Message of the ConfigError `text` raises, or "" if it parses.
std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const sslrec::ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST(Config, MinimalFillsDefaults) {
  const auto cfg = parse_config_text(kMinimal);
  EXPECT_EQ(cfg.data.path, "raw.tsv");
  EXPECT_EQ(cfg.model, sslrec::ModelParams::defaults(ModelKind::lightgcn));
  sslrec::TrainConfig t;
  t.seed = cfg.data.seed;  // train.seed falls back to data.seed
  EXPECT_EQ(cfg.train, t);
  EXPECT_FALSE(cfg.tune.has_value());

  const auto snap = sslrec::snapshot(cfg);
  for (const char* key : {"path:", "columns:", "delimiter:", "min_rating:", "kcore:", "ratios:", "seed:", "name:",
                          "layers:", "dim:", "lr:", "batch:", "max_epochs:", "eval_interval:", "patience:", "reg:",
                          "cutoffs:", "user_batch:", "objective:"})
    EXPECT_TRUE(contains(snap, key)) << key;
}

TEST(Config, ModelDefaultsFollowName) {
  const auto cfg = parse_config_text("data:\n  path: x\nmodel:\n  dim: 16\n  name: simgcl\n");
  auto expect = sslrec::ModelParams::defaults(ModelKind::simgcl);
  expect.dim = 16;
  EXPECT_EQ(cfg.model, expect);
}

TEST(Config, NegativeLayersNamesKey) {
  const auto msg = config_error(std::string(kMinimal) + "  layers: -1\n");
  EXPECT_TRUE(contains(msg, "model.layers")) << msg;
  EXPECT_TRUE(contains(msg, "line 5")) << msg;
}

TEST(Config, ErrorsNameKeyAndLine) {
  auto msg = config_error(std::string(kMinimal) + "  colour: blue\n");
  EXPECT_TRUE(contains(msg, "model.colour")) << msg;
  EXPECT_TRUE(contains(msg, "line 5")) << msg;

  msg = config_error(std::string(kMinimal) + "train:\n  lr: fast\n");
  EXPECT_TRUE(contains(msg, "train.lr")) << msg;
  EXPECT_TRUE(contains(msg, "line 6")) << msg;

  msg = config_error(std::string(kMinimal) + "train:\n  lr: \"0.1\"\n");
  EXPECT_TRUE(contains(msg, "train.lr")) << msg;

  msg = config_error(std::string(kMinimal) + "optimizer:\n  lr: 0.1\n");
  EXPECT_TRUE(contains(msg, "optimizer")) << msg;

  msg = config_error(std::string(kMinimal) + "model:\n  name: sgl\n");
  EXPECT_TRUE(contains(msg, "duplicate")) << msg;

  msg = config_error(std::string(kMinimal) + "train:\n  lr: 0.1\n  lr: 0.2\n");
  EXPECT_TRUE(contains(msg, "lr")) << msg;

  msg = config_error(std::string(kMinimal) + "data:\n  ratios: [0.5, 0.5]\n");
  EXPECT_FALSE(msg.empty());

  EXPECT_TRUE(contains(config_error("model:\n  name: lightgcn\n"), "data.path"));
  EXPECT_TRUE(contains(config_error("data:\n  path: x\n"), "model.name"));
  EXPECT_FALSE(config_error(std::string(kMinimal) + "eval:\n  cutoffs: [10, 5]\n").empty());
  EXPECT_FALSE(config_error(std::string(kMinimal) + "eval:\n  objective: recall@7\n").empty());
  EXPECT_FALSE(config_error(std::string(kMinimal) + "train:\n  nested:\n    deep: 1\n").empty());
  EXPECT_FALSE(config_error("data: [1, 2]\n").empty());
  EXPECT_FALSE(config_error("- a\n- b\n").empty());
}

TEST(Config, WrongModelKeyRejected) {
  const auto msg = config_error("data:\n  path: x\nmodel:\n  name: lightgcn\n  ssl_weight: 0.1\n");
  EXPECT_TRUE(contains(msg, "model.ssl_weight")) << msg;
  EXPECT_TRUE(contains(config_error("data:\n  path: x\nmodel:\n  name: sgl\n  noise: 0.1\n"), "model.noise"));
  EXPECT_TRUE(config_error("data:\n  path: x\nmodel:\n  name: sgl\n  dropout: 0.3\n").empty());
}

TEST(Config, TuneGridPreservedVerbatim) {
  const auto cfg = parse_config_text(std::string(kMinimal) +
                                     "eval:\n  cutoffs: [5, 20]\n  objective: ndcg@5\n"
                                     "tune:\n  train.lr: [0.001, 1e-2, 0.10]\n  layers: [1, 2]\n");
  ASSERT_TRUE(cfg.tune.has_value());
  ASSERT_EQ(cfg.tune->axes.size(), 2u);
  EXPECT_EQ(cfg.tune->axes[0].first, "train.lr");
  EXPECT_EQ(cfg.tune->axes[0].second, (std::vector<std::string>{"0.001", "1e-2", "0.10"}));
  EXPECT_EQ(cfg.tune->axes[1].first, "layers");
  EXPECT_EQ(cfg.tune->axes[1].second, (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(cfg.tune->objective, "ndcg@5");

  EXPECT_FALSE(config_error(std::string(kMinimal) + "tune:\n  lr: [0.1, -1]\n").empty());
  EXPECT_FALSE(config_error(std::string(kMinimal) + "tune:\n  seed: [1, 2]\n").empty());
  EXPECT_FALSE(config_error(std::string(kMinimal) + "tune:\n  momentum: [1, 2]\n").empty());
  EXPECT_FALSE(config_error(std::string(kMinimal) + "tune:\n  lr: []\n").empty());
}

TEST(Config, ApplyOverride) {
  auto cfg = parse_config_text("data:\n  path: x\nmodel:\n  name: directau\n");
  sslrec::apply_override(cfg, "uniformity_weight", "0.5");
  sslrec::apply_override(cfg, "train.batch", "128");
  EXPECT_EQ(*cfg.model.uniformity_weight, 0.5);
  EXPECT_EQ(cfg.train.batch, 128u);
  EXPECT_THROW(sslrec::apply_override(cfg, "batch", "0"), sslrec::ConfigError);
  EXPECT_THROW(sslrec::apply_override(cfg, "dropout", "0.1"), sslrec::ConfigError);
  EXPECT_THROW(sslrec::apply_override(cfg, "nope", "1"), sslrec::ConfigError);
}

TEST(Config, SnapshotRoundTrip) {
  const std::vector<std::string> configs{
      kMinimal,
      "data:\n  path: \"dir with space/raw.csv\"\n  columns: [user, item, rating, skip]\n  delimiter: comma\n"
      "  min_rating: 3.5\n  kcore: 10\n  ratios: [0.8, 0.1, 0.1]\n  seed: 99\n  max_malformed: 0.05\n"
      "model:\n  name: sgl\n  layers: 2\n  dim: 32\n  ssl_weight: 0.05\n  temperature: 0.3\n  dropout: 0.25\n"
      "train:\n  lr: 0.0005\n  batch: 2048\n  max_epochs: 50\n  eval_interval: 2\n  patience: 4\n  reg: 1e-5\n"
      "  seed: 7\n"
      "eval:\n  cutoffs: [5, 10]\n  user_batch: 64\n  objective: ndcg@10\n"
      "tune:\n  ssl_weight: [0.01, 0.1]\n  model.temperature: [0.1, 0.2, 0.5]\n"
      "output: runs/sgl\n",
      "data:\n  path: x\n  delimiter: \"|\"\nmodel:\n  name: simgcl\n  noise: 0.2\n",
  };
  for (const auto& text : configs) {
    const auto cfg = parse_config_text(text);
    const auto again = parse_config_text(sslrec::snapshot(cfg));
    EXPECT_EQ(again, cfg) << sslrec::snapshot(cfg);
    EXPECT_EQ(sslrec::snapshot(again), sslrec::snapshot(cfg));
  }
}

TEST(Config, ParseFile) {
  oracle::TempDir dir("config");
  const auto path = dir.write("c.yaml", kMinimal);
  EXPECT_EQ(sslrec::parse_config(path), parse_config_text(kMinimal));
  EXPECT_THROW(sslrec::parse_config(dir / "missing.yaml"), sslrec::IoError);
}
