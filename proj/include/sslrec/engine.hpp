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
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sslrec/datahub.hpp"
#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"
#include "sslrec/evalkit.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/models.hpp"
#include "sslrec/rng.hpp"

namespace sslrec {

// ---------------------------------------------------------------------------
// Negative sampling
// ---------------------------------------------------------------------------

/// One item per batch row, uniform over the items the user has not
/// interacted with in train (rejection sampling). train[u] must be sorted.
inline std::vector<std::size_t> sample_negatives(std::span<const ItemList> train, std::size_t n_items,
                                                 std::span<const std::size_t> users, Rng& rng) {
  std::vector<std::size_t> neg(users.size());
  for (std::size_t b = 0; b < users.size(); ++b) {
    const auto& seen = train[users[b]];
    if (seen.size() >= n_items)
      throw SamplingError("user " + std::to_string(users[b]) + " has interacted with every item");
    for (;;) {
      const auto candidate = static_cast<std::size_t>(rng.below(n_items));
      if (!std::binary_search(seen.begin(), seen.end(), candidate)) {
        neg[b] = candidate;
        break;
      }
    }
  }
  return neg;
}

// ---------------------------------------------------------------------------
// Adam with sparse row updates
// ---------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const Matrix& params) {
    return {Matrix(params.rows(), params.cols()), Matrix(params.rows(), params.cols()), 0};
  }
};

/// Bias-corrected Adam update. Rows whose gradient is entirely zero are
/// skipped: their parameters and moments stay as they were. The bias
/// correction uses the global step count.
inline void adam_step(Matrix& params, AdamState& state, const Matrix& grads, const AdamOptions& opt) {
  if (grads.rows() != params.rows() || grads.cols() != params.cols() ||
      state.first_moment.rows() != params.rows() || state.first_moment.cols() != params.cols())
    throw StructuralError("adam_step: shape mismatch");
  if (!all_finite(grads.data())) throw NumericError("adam_step: non-finite gradient");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t r = 0; r < params.rows(); ++r) {
    auto g = grads.row(r);
    if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
    auto w = params.row(r);
    auto m = state.first_moment.row(r);
    auto v = state.second_moment.row(r);
    for (std::size_t c = 0; c < g.size(); ++c) {
      m[c] = opt.beta1 * m[c] + (1.0 - opt.beta1) * g[c];
      v[c] = opt.beta2 * v[c] + (1.0 - opt.beta2) * g[c] * g[c];
      const double m_hat = m[c] / correction1;
      const double v_hat = v[c] / correction2;
      w[c] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
      if (!std::isfinite(w[c])) throw NumericError("adam_step: non-finite parameter in row " + std::to_string(r));
    }
  }
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

/// Tracks the best objective; stops after `patience` consecutive evaluations
/// without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `value` is a new best.
  bool update(double value) {
    if (value > best_) {
      best_ = value;
      since_improvement_ = 0;
      return true;
    }
    ++since_improvement_;
    return false;
  }

  bool should_stop() const { return since_improvement_ >= patience_; }
  double best() const { return best_; }
  std::size_t since_improvement() const { return since_improvement_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t since_improvement_ = 0;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 4096;
  std::size_t max_epochs = 300;
  std::size_t eval_interval = 3;
  std::size_t patience = 10;
  std::vector<std::size_t> cutoffs{10, 20, 40};
  std::size_t user_batch = 1024;
  std::string objective = "recall@20";
  std::uint64_t seed = 2023;
  unsigned threads = 1;

  void validate() const {
    if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("train.lr must be positive");
    if (batch == 0) throw ConfigError("train.batch must be positive");
    if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
    if (eval_interval == 0) throw ConfigError("train.eval_interval must be positive");
    if (patience == 0) throw ConfigError("train.patience must be positive");
    if (user_batch == 0) throw ConfigError("eval.user_batch must be positive");
    validate_cutoffs(cutoffs);
    validate_metric_name(objective, cutoffs);
  }

  bool operator==(const TrainConfig&) const = default;
};

/// One validation evaluation.
struct EvalRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  LossValue mean_loss;    // mean over the epoch's batches
  EvalReport report;
  double objective = 0.0;
  double best_objective = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  EmbeddingTable embeddings;
  AdamState optimizer;
  double best_objective = -std::numeric_limits<double>::infinity();
  std::size_t evals_since_improvement = 0;
  std::vector<EvalRecord> log;
};

struct TrainResult {
  TrainState state;
  std::size_t best_epoch = 0;
  Matrix best_e0;  // float32-rounded, exactly what the checkpoint stores
  EvalReport best_validation;
  EvalReport test;
};

/// Where train() writes its run artifacts, and what extra keys go into the
/// checkpoint metadata. An empty dir disables file output.
struct RunSink {
  std::filesystem::path dir;
  KeyValues checkpoint_meta;
  std::ostream* log = nullptr;
};

namespace detail {

enum StreamTag : std::uint64_t { kInitStream = 1, kViewStream, kShuffleStream, kNegativeStream };

inline nlohmann::ordered_json loss_json(const LossValue& loss) {
  nlohmann::ordered_json j;
  j["total"] = loss.total;
  for (const auto& [k, v] : loss.components) j[k] = v;
  return j;
}

inline nlohmann::ordered_json metrics_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) j["recall@" + std::to_string(r.cutoffs[c])] = r.recall[c];
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) j["ndcg@" + std::to_string(r.cutoffs[c])] = r.ndcg[c];
  return j;
}

}  // namespace detail

/// Evaluates stored (or in-memory) E0 on a split.
inline EvalReport evaluate_embeddings(const ModelParams& params, const Matrix& e0, const InteractionDataset& ds,
                                      Split split, const std::vector<std::size_t>& cutoffs, std::size_t user_batch,
                                      unsigned threads = 1, std::size_t epoch = 0) {
  if (e0.rows() != ds.n_nodes()) throw StructuralError("embedding rows do not match the dataset");
  const auto fwd = inference_forward(params, e0, ds.n_users, ds.adjacency, threads);
  return batched_full_eval(fwd, ds, split, cutoffs, user_batch, threads, epoch);
}

/// Key-value form of a report: split, counts and one line per metric.
inline KeyValues report_values(const EvalReport& r) {
  KeyValues kv;
  kv.set("split", r.split);
  kv.set("n_users", r.n_users);
  kv.set("n_excluded", r.n_excluded);
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) kv.set("recall@" + std::to_string(r.cutoffs[c]), r.recall[c]);
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) kv.set("ndcg@" + std::to_string(r.cutoffs[c]), r.ndcg[c]);
  return kv;
}

/// Epoch loop: resample augmentation views, shuffle train pairs, then for
/// each mini-batch forward, cal_loss and adam_step. Every eval_interval
/// epochs (and after the last) the validation split is evaluated; the best
/// embeddings are kept and stored, and training stops once `patience`
/// evaluations pass without improvement. The best embeddings are finally
/// evaluated on test.
inline TrainResult train(const ModelParams& params, const InteractionDataset& ds, const TrainConfig& config,
                         const RunSink& sink = {}) {
  params.validate();
  config.validate();
  if (ds.n_train() == 0) throw StructuralError("train: empty train set");
  const bool write = !sink.dir.empty();
  std::ofstream log_file;
  if (write) {
    std::filesystem::create_directories(sink.dir);
    log_file.open(sink.dir / "log.ndjson", std::ios::binary | std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (sink.dir / "log.ndjson").string());
  }

  TrainResult result;
  TrainState& state = result.state;
  state.embeddings = EmbeddingTable::init(ds.n_users, ds.n_items, params.dim,
                                          derive_seed(config.seed, detail::kInitStream));
  state.optimizer = AdamState::zeros_like(state.embeddings.weights);
  const AdamOptions adam{config.lr};
  EarlyStopping stopper(config.patience);
  const bool needs_negatives = params.kind != ModelKind::directau;
  const auto pairs = ds.train_pairs();
  std::vector<std::size_t> order(pairs.size());

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto views = sample_views(params, ds.raw_adjacency, derive_seed(config.seed, detail::kViewStream, epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, detail::kShuffleStream, epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng negative_rng(derive_seed(config.seed, detail::kNegativeStream, epoch));

    LossValue epoch_loss;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch, ++n_batches) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      Batch batch;
      for (std::size_t k = begin; k < end; ++k) {
        batch.users.push_back(pairs[order[k]].first);
        batch.pos_items.push_back(pairs[order[k]].second);
      }
      if (needs_negatives) batch.neg_items = sample_negatives(ds.train, ds.n_items, batch.users, negative_rng);
      try {
        const auto fwd = forward(params, state.embeddings, ds.adjacency, views, n_batches, config.threads);
        auto step = cal_loss(params, fwd, state.embeddings, batch, config.threads);
        adam_step(state.embeddings.weights, state.optimizer, step.grad_e0, adam);
        epoch_loss += step.loss;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(n_batches) + ": " +
                           e.what());
      }
    }
    state.epoch = epoch + 1;
    const bool last = state.epoch == config.max_epochs;
    if (state.epoch % config.eval_interval != 0 && !last) continue;

    EvalRecord rec;
    rec.epoch = state.epoch;
    rec.mean_loss.total = epoch_loss.total / static_cast<double>(n_batches);
    for (const auto& [k, v] : epoch_loss.components) rec.mean_loss.components[k] = v / static_cast<double>(n_batches);
    rec.report = evaluate_embeddings(params, state.embeddings.weights, ds, Split::validation, config.cutoffs,
                                     config.user_batch, config.threads, state.epoch);
    rec.objective = rec.report.value(config.objective);
    const bool improved = stopper.update(rec.objective);
    rec.best_objective = stopper.best();
    state.best_objective = stopper.best();
    state.evals_since_improvement = stopper.since_improvement();
    if (improved) {
      result.best_epoch = state.epoch;
      result.best_e0 = round_to_float(state.embeddings.weights);
      result.best_validation = rec.report;
      if (write) {
        Checkpoint ckpt{sink.checkpoint_meta, result.best_e0};
        write_model_params(params, ckpt.meta);
        ckpt.meta.set("n_users", ds.n_users);
        ckpt.meta.set("n_items", ds.n_items);
        ckpt.meta.set("seed", config.seed);
        ckpt.meta.set("epoch", state.epoch);
        save_checkpoint(sink.dir / "best", ckpt);
      }
    }
    if (write) {
      nlohmann::ordered_json j;
      j["epoch"] = rec.epoch;
      j["loss"] = detail::loss_json(rec.mean_loss);
      j["metrics"] = detail::metrics_json(rec.report);
      j["objective"] = rec.objective;
      j["best_objective"] = rec.best_objective;
      log_file << j.dump() << '\n';
    }
    if (sink.log) {
      *sink.log << "epoch " << rec.epoch << " loss " << format_real(rec.mean_loss.total) << " " << config.objective
                << " " << format_real(rec.objective) << (improved ? " *" : "") << '\n';
    }
    state.log.push_back(std::move(rec));
    if (stopper.should_stop()) break;
  }

  result.test = evaluate_embeddings(params, result.best_e0, ds, Split::test, config.cutoffs, config.user_batch,
                                    config.threads, result.best_epoch);
  if (write) {
    KeyValues report;
    report.set("model", model_name(params.kind));
    report.set("epochs_run", state.epoch);
    report.set("best_epoch", result.best_epoch);
    report.set("objective", config.objective);
    report.set("best_validation_objective", state.best_objective);
    const auto test_values = report_values(result.test);
    for (const auto& [k, v] : test_values.entries()) report.set(k, v);
    report.write(sink.dir / "report");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

/// Candidate values per hyperparameter, in declared key order. Values are
/// kept verbatim as written in the config.
struct TuneGrid {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::string objective = "recall@20";

  void validate() const {
    if (axes.empty()) throw ConfigError("tune grid has no hyperparameters");
    for (const auto& [name, values] : axes)
      if (values.empty()) throw ConfigError("tune grid for '" + name + "' is empty");
  }

  bool operator==(const TuneGrid&) const = default;
};

using Assignment = std::vector<std::pair<std::string, std::string>>;

/// Cartesian product in depth-first order: the first key varies slowest.
inline std::vector<Assignment> enumerate_grid(const TuneGrid& grid) {
  grid.validate();
  std::vector<Assignment> out;
  Assignment current;
  auto recurse = [&](auto&& self, std::size_t axis) -> void {
    if (axis == grid.axes.size()) {
      out.push_back(current);
      return;
    }
    for (const auto& value : grid.axes[axis].second) {
      current.emplace_back(grid.axes[axis].first, value);
      self(self, axis + 1);
      current.pop_back();
    }
  };
  recurse(recurse, 0);
  return out;
}

struct TrialReport {
  std::size_t index = 0;
  Assignment assignment;
  std::optional<double> objective;
  std::string error;
};

struct TuneOutcome {
  std::optional<std::size_t> best_trial;
  std::vector<TrialReport> trials;
};

/// Runs every grid point through `run_trial(index, assignment) -> objective`.
/// A trial that throws is recorded with its message and skipped. The best
/// trial maximizes the objective; ties go to the earliest trial.
template <typename RunTrial>
TuneOutcome tune(const TuneGrid& grid, RunTrial&& run_trial) {
  TuneOutcome outcome;
  const auto points = enumerate_grid(grid);
  for (std::size_t t = 0; t < points.size(); ++t) {
    TrialReport trial{t, points[t], std::nullopt, {}};
    try {
      trial.objective = run_trial(t, points[t]);
      if (!std::isfinite(*trial.objective)) {
        trial.error = "non-finite objective";
        trial.objective.reset();
      }
    } catch (const std::exception& e) {
      trial.error = e.what();
    }
    if (trial.objective &&
        (!outcome.best_trial || *trial.objective > *outcome.trials[*outcome.best_trial].objective))
      outcome.best_trial = t;
    outcome.trials.push_back(std::move(trial));
  }
  return outcome;
}

/// trials.tsv: header "trial<TAB>keys...<TAB>objective", one row per trial;
/// failed trials report "failed" followed by the error message.
inline void write_trials_tsv(const std::filesystem::path& path, const TuneGrid& grid, const TuneOutcome& outcome) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "trial";
  for (const auto& [name, values] : grid.axes) out << '\t' << name;
  out << '\t' << grid.objective << '\n';
  for (const auto& t : outcome.trials) {
    out << t.index;
    for (const auto& [name, value] : t.assignment) out << '\t' << value;
    if (t.objective) {
      out << '\t' << format_real(*t.objective);
    } else {
      std::string msg = t.error;
      std::replace(msg.begin(), msg.end(), '\t', ' ');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << "\tfailed: " << msg;
    }
    out << '\n';
  }
}

}  // namespace sslrec
