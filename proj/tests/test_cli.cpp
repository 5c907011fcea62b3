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

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sslrec/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = sslrec::run_subcommand(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Raw two-block file, a small config, and a preprocessed dataset.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string raw;
    for (const auto& r : oracle::two_block(12, 12)) raw += r.user_key + "\t" + r.item_key + "\n";
    dir_.write("raw.tsv", raw);
    config_ = write_config("c.yaml", "");
    const auto pre = run({"preprocess", "--config", config_, "--out", path("data"), "--quiet"});
    ASSERT_EQ(pre.code, 0) << pre.err;
  }

  std::string write_config(const std::string& name, const std::string& extra) {
    return dir_
        .write(name, "data:\n  path: " + path("raw.tsv") +
                         "\n  kcore: 1\n  ratios: [0.6, 0.2, 0.2]\n  seed: 5\n"
                         "model:\n  name: lightgcn\n  dim: 8\n  layers: 2\n"
                         "train:\n  lr: 0.01\n  batch: 32\n  max_epochs: 12\n  eval_interval: 3\n"
                         "eval:\n  cutoffs: [1, 5]\n  objective: recall@5\n  user_batch: 5\n" +
                         extra)
        .string();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  oracle::TempDir dir_{"cli"};
  std::string config_;
};

}  // namespace

TEST_F(CliTest, PreprocessWritesDatasetAndSnapshot) {
  const auto ds = sslrec::read_dataset(path("data"));
  EXPECT_EQ(ds.n_users, 12u);
  EXPECT_EQ(ds.n_items, 12u);
  const auto snap = slurp(path("data") + "/config.snapshot");
  EXPECT_EQ(sslrec::parse_config_text(snap), sslrec::parse_config(config_));
}

TEST_F(CliTest, TrainTwiceIsBitwiseIdentical) {
  const auto a = run({"train", "--config", config_, "--data", path("data"), "--out", path("run_a")});
  const auto b = run({"train", "--config", config_, "--data", path("data"), "--out", path("run_b"), "--quiet"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(a.out.find("recall@5"), std::string::npos);
  EXPECT_NE(a.err.find("epoch 3 "), std::string::npos);
  EXPECT_TRUE(b.out.empty());
  EXPECT_EQ(slurp(path("run_a") + "/report"), slurp(path("run_b") + "/report"));
  EXPECT_EQ(slurp(path("run_a") + "/best/e0.bin"), slurp(path("run_b") + "/best/e0.bin"));
  EXPECT_EQ(slurp(path("run_a") + "/log.ndjson"), slurp(path("run_b") + "/log.ndjson"));
  EXPECT_FALSE(slurp(path("run_a") + "/config.snapshot").empty());

  const auto c = run({"train", "--config", config_, "--data", path("data"), "--out", path("run_c"), "--quiet",
                      "--seed", "6"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(slurp(path("run_a") + "/best/e0.bin"), slurp(path("run_c") + "/best/e0.bin"));
}

TEST_F(CliTest, EvalMatchesTrainReport) {
  ASSERT_EQ(run({"train", "--config", config_, "--data", path("data"), "--out", path("run"), "--quiet"}).code, 0);
  const auto report = sslrec::KeyValues::read(path("run") + "/report");
  for (const char* threads : {"1", "3"}) {
    const auto ev = run({"eval", "--config", config_, "--checkpoint", path("run") + "/best", "--threads", threads,
                         "--out", path("eval_report")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto values = sslrec::KeyValues::parse(ev.out);
    ASSERT_FALSE(values.entries().empty());
    for (const auto& [k, v] : values.entries()) EXPECT_EQ(v, report.get(k)) << k << " threads " << threads;
    EXPECT_EQ(slurp(path("eval_report")), ev.out);
  }
  // explicit --data agrees with the recorded one
  const auto ev = run({"eval", "--config", config_, "--checkpoint", path("run") + "/best", "--data", path("data")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(sslrec::KeyValues::parse(ev.out).get("recall@5"), report.get("recall@5"));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fit", "--config", config_}).code, 2);
  EXPECT_EQ(run({"train", "--data", path("data"), "--out", path("r")}).code, 2);
  EXPECT_EQ(run({"train", "--config", path("missing.yaml"), "--data", path("data"), "--out", path("r")}).code, 2);
  EXPECT_EQ(run({"train", "--config", config_, "--out", path("r")}).code, 2);
  EXPECT_EQ(run({"preprocess", "--config", config_, "--out", path("d"), "--bogus"}).code, 2);

  const auto bad = write_config("bad.yaml", "tune:\n  lr: [0.1, fast]\n");
  const auto r = run({"tune", "--config", bad, "--data", path("data"), "--out", path("t")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error[config]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("tune.lr"), std::string::npos) << r.err;

  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("preprocess"), std::string::npos);
}

TEST_F(CliTest, RuntimeFailuresExitOne) {
  fs::create_directories(path("empty"));
  auto r = run({"train", "--config", config_, "--data", path("empty"), "--out", path("r")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error[io]"), std::string::npos) << r.err;

  fs::create_directories(path("not_a_ckpt"));
  r = run({"eval", "--config", config_, "--checkpoint", path("not_a_ckpt"), "--data", path("data")});
  EXPECT_EQ(r.code, 1);

  // data path that does not exist at preprocess time
  const auto missing = dir_.write("m.yaml", "data:\n  path: " + path("nope.tsv") + "\nmodel:\n  name: lightgcn\n");
  r = run({"preprocess", "--config", missing.string(), "--out", path("d2")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, TuneWritesTrialsAndBest) {
  const auto cfg = write_config("tune.yaml", "tune:\n  lr: [0.01, 0.001]\n  layers: [1, 2]\n");
  const auto r = run({"tune", "--config", cfg, "--data", path("data"), "--out", path("tune")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream tsv(path("tune") + "/trials.tsv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(tsv, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "trial\tlr\tlayers\trecall@5");
  EXPECT_EQ(lines[1].substr(0, lines[1].rfind('\t') + 1), "0\t0.01\t1\t");
  EXPECT_EQ(lines[4].substr(0, lines[4].rfind('\t') + 1), "3\t0.001\t2\t");
  for (int t = 0; t < 4; ++t) EXPECT_TRUE(fs::exists(path("tune") + "/trial_00" + std::to_string(t) + "/report"));

  const auto best = sslrec::KeyValues::read(path("tune") + "/best");
  const auto run_dir = path("tune") + "/" + best.get("run");
  EXPECT_EQ(sslrec::KeyValues::read(run_dir + "/report").get("objective"), "recall@5");
  EXPECT_NE(r.out.find("rank"), std::string::npos);

  // trial snapshots carry the overrides and a per-trial seed
  const auto t1 = sslrec::parse_config(path("tune") + "/trial_001/config.snapshot");
  EXPECT_EQ(t1.model.layers, 2u);
  EXPECT_EQ(t1.train.lr, 0.01);
  EXPECT_EQ(t1.train.seed, sslrec::derive_seed(5, 1));
  EXPECT_FALSE(t1.tune.has_value());

  // no tune section
  EXPECT_EQ(run({"tune", "--config", config_, "--data", path("data"), "--out", path("t2")}).code, 2);
}
