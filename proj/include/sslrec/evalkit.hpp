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
#include <cstddef>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sslrec/datahub.hpp"
#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"
#include "sslrec/models.hpp"

namespace sslrec {

/// Mean Recall@K and NDCG@K over evaluated users, one entry per cutoff.
struct EvalReport {
  std::string split;
  std::size_t epoch = 0;
  std::size_t n_users = 0;     // users with nonempty ground truth
  std::size_t n_excluded = 0;  // users skipped for empty ground truth
  std::vector<std::size_t> cutoffs;
  std::vector<double> recall;
  std::vector<double> ndcg;

  /// metric is "recall" or "ndcg".
  double value(const std::string& metric, std::size_t k) const {
    auto it = std::find(cutoffs.begin(), cutoffs.end(), k);
    if (it == cutoffs.end()) throw EvaluationError("cutoff @" + std::to_string(k) + " was not evaluated");
    const auto idx = static_cast<std::size_t>(it - cutoffs.begin());
    if (metric == "recall") return recall[idx];
    if (metric == "ndcg") return ndcg[idx];
    throw EvaluationError("unknown metric '" + metric + "'");
  }

  /// Accepts "recall@20" style names.
  double value(const std::string& name) const {
    auto at = name.find('@');
    auto k = at == std::string::npos ? std::nullopt : parse_integer<std::size_t>(std::string_view(name).substr(at + 1));
    if (!k) throw EvaluationError("bad metric name '" + name + "' (expected e.g. recall@20)");
    return value(name.substr(0, at), *k);
  }

  bool operator==(const EvalReport&) const = default;
};

/// Checks a "recall@K" / "ndcg@K" objective name against the cutoff list.
inline void validate_metric_name(const std::string& name, std::span<const std::size_t> cutoffs) {
  auto at = name.find('@');
  if (at == std::string::npos) throw ConfigError("metric '" + name + "' must look like recall@20");
  const auto metric = name.substr(0, at);
  auto k = parse_integer<std::size_t>(std::string_view(name).substr(at + 1));
  if ((metric != "recall" && metric != "ndcg") || !k) throw ConfigError("metric '" + name + "' must look like recall@20");
  if (std::find(cutoffs.begin(), cutoffs.end(), *k) == cutoffs.end())
    throw ConfigError("metric '" + name + "' uses a cutoff missing from eval.cutoffs");
}

inline void validate_cutoffs(std::span<const std::size_t> cutoffs) {
  if (cutoffs.empty()) throw ConfigError("no cutoffs given");
  for (std::size_t k = 0; k < cutoffs.size(); ++k) {
    if (cutoffs[k] == 0) throw ConfigError("cutoffs must be positive");
    if (k > 0 && cutoffs[k] <= cutoffs[k - 1]) throw ConfigError("cutoffs must be strictly ascending");
  }
}

/// Per-user Recall@K and NDCG@K for every cutoff. Train items are removed from
/// the candidate list; the ranking orders by score descending, then item id
/// ascending. `train` and `truth` must be sorted.
struct UserMetrics {
  std::vector<double> recall;
  std::vector<double> ndcg;
};

inline UserMetrics user_metrics(std::span<const double> scores, std::span<const std::size_t> train,
                                std::span<const std::size_t> truth, std::span<const std::size_t> cutoffs) {
  const std::size_t max_k = cutoffs.back();
  std::vector<std::size_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::binary_search(train.begin(), train.end(), i)) candidates.push_back(i);
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  const std::size_t top = std::min(max_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(top), candidates.end(), better);

  UserMetrics m{std::vector<double>(cutoffs.size()), std::vector<double>(cutoffs.size())};
  std::size_t hits = 0;
  double dcg = 0.0;
  double idcg = 0.0;
  std::size_t c = 0;
  for (std::size_t r = 1; r <= max_k; ++r) {
    const double discount = 1.0 / std::log2(static_cast<double>(r) + 1.0);
    if (r <= top && std::binary_search(truth.begin(), truth.end(), candidates[r - 1])) {
      ++hits;
      dcg += discount;
    }
    if (r <= truth.size()) idcg += discount;
    while (c < cutoffs.size() && cutoffs[c] == r) {
      m.recall[c] = static_cast<double>(hits) / static_cast<double>(truth.size());
      m.ndcg[c] = dcg / idcg;
      ++c;
    }
  }
  return m;
}

/// Sums per-user metrics in the order users are added and averages on
/// finish(). Feeding users in ascending id order makes the result independent
/// of how the work was batched.
class RankAccumulator {
 public:
  explicit RankAccumulator(std::vector<std::size_t> cutoffs) : cutoffs_(std::move(cutoffs)) {
    validate_cutoffs(cutoffs_);
    recall_sum_.assign(cutoffs_.size(), 0.0);
    ndcg_sum_.assign(cutoffs_.size(), 0.0);
  }

  const std::vector<std::size_t>& cutoffs() const { return cutoffs_; }

  void add(const UserMetrics& m) {
    for (std::size_t c = 0; c < cutoffs_.size(); ++c) {
      recall_sum_[c] += m.recall[c];
      ndcg_sum_[c] += m.ndcg[c];
    }
    ++n_users_;
  }

  void exclude() { ++n_excluded_; }

  EvalReport finish(std::string split, std::size_t epoch) const {
    if (n_users_ == 0) throw EvaluationError("no user with nonempty ground truth in split '" + split + "'");
    EvalReport r;
    r.split = std::move(split);
    r.epoch = epoch;
    r.n_users = n_users_;
    r.n_excluded = n_excluded_;
    r.cutoffs = cutoffs_;
    for (std::size_t c = 0; c < cutoffs_.size(); ++c) {
      r.recall.push_back(recall_sum_[c] / static_cast<double>(n_users_));
      r.ndcg.push_back(ndcg_sum_[c] / static_cast<double>(n_users_));
    }
    return r;
  }

 private:
  std::vector<std::size_t> cutoffs_;
  std::vector<double> recall_sum_;
  std::vector<double> ndcg_sum_;
  std::size_t n_users_ = 0;
  std::size_t n_excluded_ = 0;
};

/// Row u of `scores` holds the scores of user u over all items. Users with an
/// empty ground truth are excluded from the mean and counted.
inline EvalReport rank_eval(const Matrix& scores, std::span<const ItemList> train, std::span<const ItemList> truth,
                            std::vector<std::size_t> cutoffs, std::string split = "eval", std::size_t epoch = 0) {
  if (train.size() != scores.rows() || truth.size() != scores.rows())
    throw StructuralError("rank_eval: score rows do not match mask/ground-truth lists");
  RankAccumulator acc(std::move(cutoffs));
  for (std::size_t u = 0; u < scores.rows(); ++u) {
    if (truth[u].empty()) {
      acc.exclude();
      continue;
    }
    acc.add(user_metrics(scores.row(u), train[u], truth[u], acc.cutoffs()));
  }
  return acc.finish(std::move(split), epoch);
}

enum class Split { validation, test };

inline std::string split_name(Split s) { return s == Split::validation ? "validation" : "test"; }

/// Full-ranking evaluation of every user over all items, in ascending user
/// batches of `user_batch`. Within a batch, users are scored and ranked on up
/// to `threads` workers; the per-user results are then summed in ascending
/// user order, so the report is bitwise independent of both knobs.
inline EvalReport batched_full_eval(const ForwardOutput& fwd, const InteractionDataset& ds, Split split,
                                    const std::vector<std::size_t>& cutoffs, std::size_t user_batch,
                                    unsigned threads = 1, std::size_t epoch = 0) {
  if (user_batch == 0) throw ConfigError("user_batch must be positive");
  const auto& truth = split == Split::validation ? ds.validation : ds.test;
  RankAccumulator acc(cutoffs);
  std::vector<std::optional<UserMetrics>> results;
  for (std::size_t begin = 0; begin < ds.n_users; begin += user_batch) {
    const std::size_t end = std::min(ds.n_users, begin + user_batch);
    results.assign(end - begin, std::nullopt);
    detail::parallel_rows(end - begin, threads, [&](std::size_t lo, std::size_t hi) {
      std::vector<std::size_t> users;
      for (std::size_t k = lo; k < hi; ++k)
        if (!truth[begin + k].empty()) users.push_back(begin + k);
      if (users.empty()) return;
      const Matrix scores = full_predict(fwd, users);
      for (std::size_t r = 0; r < users.size(); ++r)
        results[users[r] - begin] = user_metrics(scores.row(r), ds.train[users[r]], truth[users[r]], acc.cutoffs());
    });
    for (std::size_t k = 0; k < results.size(); ++k) {
      if (results[k]) {
        acc.add(*results[k]);
      } else {
        acc.exclude();
      }
    }
  }
  return acc.finish(split_name(split), epoch);
}

}  // namespace sslrec
