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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"
#include "sslrec/rng.hpp"
#include "sslrec/sparse.hpp"

namespace sslrec {

enum class AugmentKind { identity, edge_dropout, feature_noise, embedding_dropout };

inline AugmentKind parse_augment_kind(const std::string& s) {
  if (s == "identity") return AugmentKind::identity;
  if (s == "edge_dropout") return AugmentKind::edge_dropout;
  if (s == "feature_noise") return AugmentKind::feature_noise;
  if (s == "embedding_dropout") return AugmentKind::embedding_dropout;
  throw ConfigError("unknown augmentation '" + s + "'");
}

/// One augmentation operator with its strength (dropout rate, or noise
/// magnitude for feature_noise) and its random stream.
struct AugmentSpec {
  AugmentKind kind = AugmentKind::identity;
  double rate_or_eps = 0.0;
  std::uint64_t stream_seed = 0;

  void validate() const {
    switch (kind) {
      case AugmentKind::identity: break;
      case AugmentKind::edge_dropout:
      case AugmentKind::embedding_dropout:
        if (!(rate_or_eps >= 0.0 && rate_or_eps < 1.0))
          throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate_or_eps));
        break;
      case AugmentKind::feature_noise:
        if (!(rate_or_eps > 0.0 && std::isfinite(rate_or_eps)))
          throw ConfigError("noise magnitude must be positive, got " + std::to_string(rate_or_eps));
        break;
    }
  }
};

/// Drops each undirected edge of a symmetric unnormalized adjacency with
/// probability rho and returns the re-normalized view. Entries (u,v) and
/// (v,u) share one coin, flipped in row-major order of the upper triangle.
/// Diagonal entries are always kept.
inline CsrMatrix edge_dropout(const CsrMatrix& adjacency_raw, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("edge_dropout: rho must lie in [0,1)");
  if (adjacency_raw.n_rows() != adjacency_raw.n_cols()) throw StructuralError("edge_dropout: adjacency not square");
  if (rho == 0.0) return normalize_sym(adjacency_raw);
  std::vector<CooEntry> kept;
  kept.reserve(adjacency_raw.nnz());
  for (std::size_t r = 0; r < adjacency_raw.n_rows(); ++r) {
    auto cols = adjacency_raw.row_cols(r);
    auto vals = adjacency_raw.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::size_t c = cols[k];
      if (c < r) continue;
      if (c == r) {
        kept.push_back({r, c, vals[k]});
        continue;
      }
      if (rng.uniform() >= rho) {
        kept.push_back({r, c, vals[k]});
        kept.push_back({c, r, adjacency_raw.at(c, r)});
      }
    }
  }
  return normalize_sym(CsrMatrix::from_coo(adjacency_raw.n_rows(), adjacency_raw.n_cols(), std::move(kept)));
}

/// Adds eps * sign(z) * (zeta / |zeta|) to every row in place, zeta drawn
/// elementwise from U(0,1). Every row moves by exactly eps in L2; sign(0) = +1.
inline void add_feature_noise(Matrix& z, double eps, Rng& rng) {
  if (!(eps > 0.0)) throw ConfigError("feature_noise: eps must be positive");
  std::vector<double> zeta(z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double norm = 0.0;
    do {
      for (double& v : zeta) v = rng.uniform();
      norm = std::sqrt(squared_norm(zeta));
    } while (norm == 0.0 && !zeta.empty());
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double sign = row[c] < 0.0 ? -1.0 : 1.0;
      row[c] += eps * sign * (zeta[c] / norm);
    }
  }
}

inline Matrix feature_noise(Matrix z, double eps, Rng& rng) {
  add_feature_noise(z, eps, rng);
  return z;
}

/// Inverted dropout: zero each element with probability `rate`, scale the
/// survivors by 1/(1-rate).
inline Matrix embedding_dropout(Matrix z, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("embedding_dropout: rate must lie in [0,1)");
  if (rate == 0.0) return z;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : z.data()) v = rng.uniform() < rate ? 0.0 : v * keep_scale;
  return z;
}

/// Applies a dense augmentation described by `spec` using its own stream.
inline Matrix apply_augment(const AugmentSpec& spec, Matrix z) {
  spec.validate();
  Rng rng(spec.stream_seed);
  switch (spec.kind) {
    case AugmentKind::identity: return z;
    case AugmentKind::feature_noise: return feature_noise(std::move(z), spec.rate_or_eps, rng);
    case AugmentKind::embedding_dropout: return embedding_dropout(std::move(z), spec.rate_or_eps, rng);
    case AugmentKind::edge_dropout: break;
  }
  throw ConfigError("edge_dropout applies to adjacency matrices, not dense features");
}

}  // namespace sslrec
