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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sslrec/config.hpp"
#include "sslrec/datahub.hpp"
#include "sslrec/engine.hpp"
#include "sslrec/error.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/models.hpp"
#include "sslrec/rng.hpp"

namespace sslrec {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

namespace detail {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool quiet = false;
};

inline const char* error_kind(const Error& e) {
  if (dynamic_cast<const StructuralError*>(&e)) return "structural";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const SamplingError*>(&e)) return "sampling";
  if (dynamic_cast<const EvaluationError*>(&e)) return "evaluation";
  return "runtime";
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline ExperimentConfig load_config(const CommonFlags& flags) {
  auto cfg = parse_config(flags.config);
  if (flags.seed) {
    cfg.data.seed = *flags.seed;
    cfg.train.seed = *flags.seed;
  }
  cfg.train.threads = resolve_threads(flags.threads);
  return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

inline void print_report(std::ostream& out, const std::string& title, const EvalReport& r) {
  out << title << " (" << r.split << ", " << r.n_users << " users)\n";
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) {
    out << "  @" << std::left << std::setw(4) << r.cutoffs[c] << " recall " << std::fixed << std::setprecision(4)
        << r.recall[c] << "  ndcg " << r.ndcg[c] << '\n';
  }
  out << std::defaultfloat;
}

inline int cmd_preprocess(const CommonFlags& flags, const std::string& out_dir, std::ostream& out) {
  const auto cfg = load_config(flags);
  const auto result = preprocess(cfg.data);
  write_dataset(out_dir, result.dataset, result.meta);
  write_text(std::filesystem::path(out_dir) / "config.snapshot", snapshot(cfg));
  if (!flags.quiet) {
    out << "users " << result.dataset.n_users << "  items " << result.dataset.n_items << "  train "
        << result.dataset.count(result.dataset.train) << "  validation " << result.dataset.count(result.dataset.validation)
        << "  test " << result.dataset.count(result.dataset.test) << '\n';
  }
  return kExitOk;
}

inline TrainResult run_training(const ExperimentConfig& cfg, const InteractionDataset& ds,
                                const std::filesystem::path& data_dir, const std::filesystem::path& run_dir,
                                std::ostream* log) {
  std::filesystem::create_directories(run_dir);
  write_text(run_dir / "config.snapshot", snapshot(cfg));
  RunSink sink;
  sink.dir = run_dir;
  sink.checkpoint_meta.set("data_dir", std::filesystem::absolute(data_dir).lexically_normal().string());
  sink.log = log;
  return train(cfg.model, ds, cfg.train, sink);
}

inline int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& out_dir,
                     std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(flags);
  const auto ds = read_dataset(data_dir);
  const auto result = run_training(cfg, ds, data_dir, out_dir, flags.quiet ? nullptr : &err);
  if (!flags.quiet) {
    out << model_name(cfg.model.kind) << ": best epoch " << result.best_epoch << ", validation " << cfg.train.objective
        << " " << format_real(result.state.best_objective) << '\n';
    print_report(out, "test", result.test);
  }
  return kExitOk;
}

inline int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_dir, std::string data_dir,
                    const std::string& report_path, std::ostream& out) {
  const auto cfg = load_config(flags);
  const auto ckpt = load_checkpoint(checkpoint_dir);
  if (data_dir.empty()) {
    const auto* stored = ckpt.meta.find("data_dir");
    if (!stored) throw ConfigError("checkpoint has no data_dir; pass --data");
    data_dir = *stored;
  }
  const auto params = read_model_params(ckpt.meta);
  const auto ds = read_dataset(data_dir);
  const auto report = evaluate_embeddings(params, ckpt.e0, ds, Split::test, cfg.train.cutoffs, cfg.train.user_batch,
                                          cfg.train.threads, ckpt.meta.get_count("epoch"));
  const auto values = report_values(report);
  if (!report_path.empty()) values.write(report_path);
  out << values.to_string();
  return kExitOk;
}

inline std::string trial_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trial_%03zu", index);
  return buf;
}

inline int cmd_tune(const CommonFlags& flags, const std::string& data_dir, const std::string& out_dir,
                    std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(flags);
  if (!cfg.tune) throw ConfigError("tune: config has no tune section");
  const auto ds = read_dataset(data_dir);
  const std::filesystem::path root(out_dir);
  std::filesystem::create_directories(root);
  write_text(root / "config.snapshot", snapshot(cfg));
  const auto outcome = tune(*cfg.tune, [&](std::size_t index, const Assignment& assignment) {
    ExperimentConfig trial = cfg;
    for (const auto& [name, value] : assignment) apply_override(trial, name, value);
    trial.train.seed = derive_seed(cfg.train.seed, index);
    trial.tune.reset();
    if (!flags.quiet) {
      err << "trial " << index;
      for (const auto& [name, value] : assignment) err << ' ' << name << '=' << value;
      err << '\n';
    }
    const auto result = run_training(trial, ds, data_dir, root / trial_dir_name(index), nullptr);
    return result.state.best_objective;
  });
  write_trials_tsv(root / "trials.tsv", *cfg.tune, outcome);

  std::vector<const TrialReport*> ranked;
  for (const auto& t : outcome.trials)
    if (t.objective) ranked.push_back(&t);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const TrialReport* a, const TrialReport* b) { return *a->objective > *b->objective; });
  out << "rank  trial  " << cfg.tune->objective << "  setting\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    out << std::setw(4) << r + 1 << "  " << trial_dir_name(ranked[r]->index) << "  " << std::fixed
        << std::setprecision(4) << *ranked[r]->objective << std::defaultfloat << " ";
    for (const auto& [name, value] : ranked[r]->assignment) out << ' ' << name << '=' << value;
    out << '\n';
  }
  for (const auto& t : outcome.trials)
    if (!t.objective) out << "failed " << trial_dir_name(t.index) << ": " << t.error << '\n';
  if (!outcome.best_trial) throw Error("tune: every trial failed");
  KeyValues best;
  best.set("trial", *outcome.best_trial);
  best.set("run", trial_dir_name(*outcome.best_trial));
  best.set("objective", cfg.tune->objective);
  best.set("value", *outcome.trials[*outcome.best_trial].objective);
  for (const auto& [name, value] : outcome.trials[*outcome.best_trial].assignment) best.set(name, value);
  best.write(root / "best");
  return kExitOk;
}

}  // namespace detail

/// Entry point behind the sslrec binary. args excludes the program name.
/// Returns 0 on success, 1 on runtime failure, 2 on usage or config errors.
inline int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph collaborative filtering with self-supervised objectives", "sslrec"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  detail::CommonFlags flags;
  std::string data_dir, out_dir, checkpoint_dir, report_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "override data.seed and train.seed");
    sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
    sub->add_flag("--quiet", flags.quiet, "suppress progress output");
  };
  auto* pre = app.add_subcommand("preprocess", "raw interactions to a dataset directory");
  add_common(pre);
  pre->add_option("--out", out_dir, "dataset directory")->required();
  auto* trn = app.add_subcommand("train", "train one model");
  add_common(trn);
  trn->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", out_dir, "run directory")->required();
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(evl);
  evl->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--data", data_dir, "dataset directory (default: the one recorded at train time)");
  evl->add_option("--out", report_path, "also write the report to this file");
  auto* tun = app.add_subcommand("tune", "grid search over the tune section");
  add_common(tun);
  tun->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  tun->add_option("--out", out_dir, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (pre->parsed()) return detail::cmd_preprocess(flags, out_dir, out);
    if (trn->parsed()) return detail::cmd_train(flags, data_dir, out_dir, out, err);
    if (evl->parsed()) return detail::cmd_eval(flags, checkpoint_dir, data_dir, report_path, out);
    return detail::cmd_tune(flags, data_dir, out_dir, out, err);
  } catch (const ConfigError& e) {
    err << "error[config]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error[" << detail::error_kind(e) << "]: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace sslrec
