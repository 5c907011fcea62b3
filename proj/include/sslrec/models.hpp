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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "sslrec/augment.hpp"
#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"
#include "sslrec/kvtext.hpp"
#include "sslrec/objectives.hpp"
#include "sslrec/rng.hpp"
#include "sslrec/sparse.hpp"

namespace sslrec {

enum class ModelKind { lightgcn, sgl, simgcl, directau };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "lightgcn") return ModelKind::lightgcn;
  if (s == "sgl") return ModelKind::sgl;
  if (s == "simgcl") return ModelKind::simgcl;
  if (s == "directau") return ModelKind::directau;
  throw ConfigError("unknown model '" + s + "' (expected lightgcn, sgl, simgcl or directau)");
}

inline std::string model_name(ModelKind k) {
  switch (k) {
    case ModelKind::lightgcn: return "lightgcn";
    case ModelKind::sgl: return "sgl";
    case ModelKind::simgcl: return "simgcl";
    case ModelKind::directau: return "directau";
  }
  return "lightgcn";
}

inline bool is_contrastive(ModelKind k) { return k == ModelKind::sgl || k == ModelKind::simgcl; }

/// Hyperparameters of one model. The optional fields are model-specific and
/// must be unset for models that do not use them.
struct ModelParams {
  ModelKind kind = ModelKind::lightgcn;
  std::size_t layers = 3;
  std::size_t dim = 64;
  double reg = 1e-4;
  std::optional<double> ssl_weight;         // sgl, simgcl
  std::optional<double> temperature;        // sgl, simgcl
  std::optional<double> dropout;            // sgl
  std::optional<double> noise;              // simgcl
  std::optional<double> uniformity_weight;  // directau

  static ModelParams defaults(ModelKind kind) {
    ModelParams p;
    p.kind = kind;
    switch (kind) {
      case ModelKind::lightgcn: break;
      case ModelKind::sgl:
        p.ssl_weight = 0.1;
        p.temperature = 0.2;
        p.dropout = 0.1;
        break;
      case ModelKind::simgcl:
        p.ssl_weight = 0.1;
        p.temperature = 0.2;
        p.noise = 0.1;
        break;
      case ModelKind::directau: p.uniformity_weight = 1.0; break;
    }
    return p;
  }

  /// Names of the model-specific fields `kind` accepts.
  static std::vector<std::string> specific_fields(ModelKind kind) {
    switch (kind) {
      case ModelKind::lightgcn: return {};
      case ModelKind::sgl: return {"ssl_weight", "temperature", "dropout"};
      case ModelKind::simgcl: return {"ssl_weight", "temperature", "noise"};
      case ModelKind::directau: return {"uniformity_weight"};
    }
    return {};
  }

  void validate() const {
    auto allowed = specific_fields(kind);
    auto check = [&](const std::optional<double>& v, const char* name) {
      const bool wanted = std::find(allowed.begin(), allowed.end(), name) != allowed.end();
      if (v && !wanted) throw ConfigError("model." + std::string(name) + " is not a parameter of " + model_name(kind));
      if (!v && wanted) throw ConfigError("model." + std::string(name) + " is required by " + model_name(kind));
    };
    check(ssl_weight, "ssl_weight");
    check(temperature, "temperature");
    check(dropout, "dropout");
    check(noise, "noise");
    check(uniformity_weight, "uniformity_weight");
    if (dim == 0) throw ConfigError("model.dim must be positive");
    if (!(reg >= 0.0) || !std::isfinite(reg)) throw ConfigError("train.reg must be nonnegative");
    if (ssl_weight && !(*ssl_weight >= 0.0 && std::isfinite(*ssl_weight)))
      throw ConfigError("model.ssl_weight must be nonnegative");
    if (temperature && !(*temperature > 0.0 && std::isfinite(*temperature)))
      throw ConfigError("model.temperature must be positive");
    if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) throw ConfigError("model.dropout must lie in [0,1)");
    if (noise && !(*noise > 0.0 && std::isfinite(*noise))) throw ConfigError("model.noise must be positive");
    if (uniformity_weight && !(*uniformity_weight >= 0.0 && std::isfinite(*uniformity_weight)))
      throw ConfigError("model.uniformity_weight must be nonnegative");
  }

  bool operator==(const ModelParams&) const = default;
};

/// Free embeddings E0: user rows first, then item rows.
struct EmbeddingTable {
  Matrix weights;
  std::size_t n_users = 0;
  std::size_t n_items = 0;

  std::size_t dim() const { return weights.cols(); }

  /// Zero-mean uniform init on [-0.1/sqrt(d), 0.1/sqrt(d)].
  static EmbeddingTable init(std::size_t n_users, std::size_t n_items, std::size_t dim, std::uint64_t seed) {
    EmbeddingTable t{Matrix(n_users + n_items, dim), n_users, n_items};
    const double scale = 0.1 / std::sqrt(static_cast<double>(dim));
    Rng rng(seed);
    for (double& v : t.weights.data()) v = scale * (2.0 * rng.uniform() - 1.0);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Propagation backbone
// ---------------------------------------------------------------------------

struct NoiseSpec {
  double eps = 0.0;
  std::uint64_t seed = 0;
};

/// Z = 1/(L+1) * sum_{l=0..L} E^(l), E^(l+1) = A E^(l). With `noise`, every
/// propagated layer gets a fresh feature_noise draw before it feeds the next.
inline Matrix propagate(const CsrMatrix& adjacency, const Matrix& e0, std::size_t layers,
                        const NoiseSpec* noise = nullptr, unsigned threads = 1) {
  if (adjacency.n_rows() != adjacency.n_cols() || adjacency.n_cols() != e0.rows())
    throw StructuralError("propagate: adjacency is " + std::to_string(adjacency.n_rows()) + "x" +
                          std::to_string(adjacency.n_cols()) + " but embeddings have " + std::to_string(e0.rows()) +
                          " rows");
  Matrix sum = e0;
  Matrix layer = e0;
  for (std::size_t l = 1; l <= layers; ++l) {
    layer = spmm(adjacency, layer, threads);
    if (noise) {
      Rng rng(derive_seed(noise->seed, l));
      add_feature_noise(layer, noise->eps, rng);
    }
    sum += layer;
  }
  sum *= 1.0 / static_cast<double>(layers + 1);
  return sum;
}

/// Adjoint of propagate without noise. The propagation operator is a
/// polynomial in a symmetric matrix, hence self-adjoint, so this is the
/// forward pass applied to dZ.
inline Matrix propagate_grad(const CsrMatrix& adjacency, const Matrix& grad_z, std::size_t layers,
                             unsigned threads = 1) {
  if (adjacency.n_cols() != grad_z.rows())
    throw StructuralError("propagate_grad: gradient rows do not match the forward adjacency");
  return propagate(adjacency, grad_z, layers, nullptr, threads);
}

// ---------------------------------------------------------------------------
// Model interface: forward / cal_loss / full_predict
// ---------------------------------------------------------------------------

/// Augmentation state for one epoch. SGL keeps two edge-dropped adjacencies;
/// SimGCL keeps two noise stream seeds that are further keyed by step.
struct AugmentedViews {
  std::optional<CsrMatrix> adjacency1;
  std::optional<CsrMatrix> adjacency2;
  std::uint64_t noise_seed1 = 0;
  std::uint64_t noise_seed2 = 0;
};

inline AugmentedViews sample_views(const ModelParams& params, const CsrMatrix& raw_adjacency, std::uint64_t seed) {
  AugmentedViews v;
  if (params.kind == ModelKind::sgl) {
    Rng rng1(derive_seed(seed, 1));
    Rng rng2(derive_seed(seed, 2));
    v.adjacency1 = edge_dropout(raw_adjacency, *params.dropout, rng1);
    v.adjacency2 = edge_dropout(raw_adjacency, *params.dropout, rng2);
  } else if (params.kind == ModelKind::simgcl) {
    v.noise_seed1 = derive_seed(seed, 1);
    v.noise_seed2 = derive_seed(seed, 2);
  }
  return v;
}

/// Final embeddings plus, for contrastive models, the two view embeddings.
/// The adjacency pointers are non-owning and must outlive this object; they
/// record which operator each output went through, for the gradient pass.
struct ForwardOutput {
  Matrix z;
  std::optional<Matrix> view1;
  std::optional<Matrix> view2;
  const CsrMatrix* adjacency = nullptr;
  const CsrMatrix* view1_adjacency = nullptr;
  const CsrMatrix* view2_adjacency = nullptr;
  std::size_t layers = 0;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
};

inline ForwardOutput forward(const ModelParams& params, const EmbeddingTable& e0, const CsrMatrix& adjacency,
                             const AugmentedViews& views, std::uint64_t step = 0, unsigned threads = 1) {
  params.validate();
  ForwardOutput out;
  out.z = propagate(adjacency, e0.weights, params.layers, nullptr, threads);
  out.adjacency = &adjacency;
  out.layers = params.layers;
  out.n_users = e0.n_users;
  out.n_items = e0.n_items;
  if (params.kind == ModelKind::sgl) {
    if (!views.adjacency1 || !views.adjacency2) throw StructuralError("forward: sgl needs edge-dropout views");
    out.view1 = propagate(*views.adjacency1, e0.weights, params.layers, nullptr, threads);
    out.view2 = propagate(*views.adjacency2, e0.weights, params.layers, nullptr, threads);
    out.view1_adjacency = &*views.adjacency1;
    out.view2_adjacency = &*views.adjacency2;
  } else if (params.kind == ModelKind::simgcl) {
    const NoiseSpec n1{*params.noise, derive_seed(views.noise_seed1, step)};
    const NoiseSpec n2{*params.noise, derive_seed(views.noise_seed2, step)};
    out.view1 = propagate(adjacency, e0.weights, params.layers, &n1, threads);
    out.view2 = propagate(adjacency, e0.weights, params.layers, &n2, threads);
    // Noise is constant w.r.t. E0, so the views share the clean adjoint.
    out.view1_adjacency = &adjacency;
    out.view2_adjacency = &adjacency;
  }
  return out;
}

/// Final embeddings only, for scoring and evaluation.
inline ForwardOutput inference_forward(const ModelParams& params, const Matrix& e0, std::size_t n_users,
                                       const CsrMatrix& adjacency, unsigned threads = 1) {
  ForwardOutput out;
  out.z = propagate(adjacency, e0, params.layers, nullptr, threads);
  out.adjacency = &adjacency;
  out.layers = params.layers;
  out.n_users = n_users;
  out.n_items = e0.rows() - n_users;
  return out;
}

/// One mini-batch of (user, positive item, negative item) triples; item ids
/// are in [0, n_items). DirectAU ignores neg_items.
struct Batch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> pos_items;
  std::vector<std::size_t> neg_items;
};

struct LossResult {
  LossValue loss;
  Matrix grad_e0;
};

namespace detail {

inline std::vector<std::size_t> unique_sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<std::size_t> offset_ids(std::span<const std::size_t> ids, std::size_t offset) {
  std::vector<std::size_t> out(ids.begin(), ids.end());
  for (auto& v : out) v += offset;
  return out;
}

/// BPR on dot-product scores of final embeddings; gradients go into grad_z.
inline LossValue bpr_on_embeddings(const Matrix& z, std::span<const std::size_t> users,
                                   std::span<const std::size_t> pos_nodes, std::span<const std::size_t> neg_nodes,
                                   GradBuffer& grad_z) {
  std::vector<double> s_pos(users.size()), s_neg(users.size());
  for (std::size_t b = 0; b < users.size(); ++b) {
    s_pos[b] = dot(z.row(users[b]), z.row(pos_nodes[b]));
    s_neg[b] = dot(z.row(users[b]), z.row(neg_nodes[b]));
  }
  auto bpr = bpr_loss(s_pos, s_neg);
  for (std::size_t b = 0; b < users.size(); ++b) {
    grad_z.add_row(users[b], z.row(pos_nodes[b]), bpr.grad_pos[b]);
    grad_z.add_row(users[b], z.row(neg_nodes[b]), bpr.grad_neg[b]);
    grad_z.add_row(pos_nodes[b], z.row(users[b]), bpr.grad_pos[b]);
    grad_z.add_row(neg_nodes[b], z.row(users[b]), bpr.grad_neg[b]);
  }
  return bpr.loss;
}

inline void require_finite(const LossValue& loss) {
  for (const auto& [name, value] : loss.components)
    if (!std::isfinite(value)) throw NumericError("non-finite loss component '" + name + "'");
  if (!std::isfinite(loss.total)) throw NumericError("non-finite total loss");
}

}  // namespace detail

/// Total loss of one batch and its gradient with respect to E0.
///   lightgcn: BPR + reg
///   sgl, simgcl: BPR + ssl_weight * (InfoNCE over batch users + over batch
///                positive items, both deduplicated) + reg
///   directau: alignment + uniformity_weight * (uniformity of batch users +
///             of batch positive items) + reg
/// reg is l2_reg(reg) over the distinct E0 rows the batch touches.
inline LossResult cal_loss(const ModelParams& params, const ForwardOutput& fwd, const EmbeddingTable& e0,
                           const Batch& batch, unsigned threads = 1) {
  const std::size_t B = batch.users.size();
  if (B == 0) throw StructuralError("cal_loss: empty batch");
  const bool uses_negatives = params.kind != ModelKind::directau;
  if (batch.pos_items.size() != B || (uses_negatives && batch.neg_items.size() != B))
    throw StructuralError("cal_loss: batch columns differ in length");
  const std::size_t M = fwd.n_users;
  for (std::size_t b = 0; b < B; ++b) {
    if (batch.users[b] >= M || batch.pos_items[b] >= fwd.n_items ||
        (uses_negatives && batch.neg_items[b] >= fwd.n_items))
      throw StructuralError("cal_loss: batch index out of range at row " + std::to_string(b));
  }
  const std::size_t n_nodes = fwd.z.rows();
  const std::size_t d = fwd.z.cols();
  const auto pos_nodes = detail::offset_ids(batch.pos_items, M);
  const auto neg_nodes = uses_negatives ? detail::offset_ids(batch.neg_items, M) : std::vector<std::size_t>{};

  LossResult out;
  GradBuffer grad_z(n_nodes, d);
  std::optional<GradBuffer> grad_v1, grad_v2;

  if (uses_negatives) {
    out.loss += detail::bpr_on_embeddings(fwd.z, batch.users, pos_nodes, neg_nodes, grad_z);
  }

  if (is_contrastive(params.kind)) {
    if (!fwd.view1 || !fwd.view2) throw StructuralError("cal_loss: contrastive model without views");
    const double weight = *params.ssl_weight;
    double ssl = 0.0;
    if (weight != 0.0) {
      grad_v1.emplace(n_nodes, d);
      grad_v2.emplace(n_nodes, d);
      for (const auto& nodes : {detail::unique_sorted(batch.users), detail::unique_sorted(pos_nodes)}) {
        auto nce = infonce(gather_rows(*fwd.view1, nodes), gather_rows(*fwd.view2, nodes), *params.temperature);
        ssl += nce.loss.total;
        grad_v1->scatter(nodes, nce.grad_a, weight);
        grad_v2->scatter(nodes, nce.grad_b, weight);
      }
    }
    out.loss.add("ssl", weight * ssl);
  }

  if (params.kind == ModelKind::directau) {
    auto align = alignment_loss(gather_rows(fwd.z, batch.users), gather_rows(fwd.z, pos_nodes));
    grad_z.scatter(batch.users, align.grad_a);
    grad_z.scatter(pos_nodes, align.grad_b);
    out.loss += align.loss;
    const double gamma = *params.uniformity_weight;
    double uniform = 0.0;
    // A single-row batch has no pairs; its uniformity term is zero.
    if (B >= 2) {
      for (const auto* nodes : {&batch.users, &pos_nodes}) {
        auto u = uniformity_loss(gather_rows(fwd.z, *nodes));
        uniform += u.loss.total;
        grad_z.scatter(*nodes, u.grad, gamma);
      }
    }
    out.loss.add("uniform", gamma * uniform);
  }

  std::vector<std::size_t> touched(batch.users.begin(), batch.users.end());
  touched.insert(touched.end(), pos_nodes.begin(), pos_nodes.end());
  touched.insert(touched.end(), neg_nodes.begin(), neg_nodes.end());
  touched = detail::unique_sorted(std::move(touched));
  auto reg = l2_reg(gather_rows(e0.weights, touched), params.reg);
  out.loss += reg.loss;
  detail::require_finite(out.loss);

  out.grad_e0 = propagate_grad(*fwd.adjacency, grad_z.matrix(), fwd.layers, threads);
  if (grad_v1) {
    out.grad_e0 += propagate_grad(*fwd.view1_adjacency, grad_v1->matrix(), fwd.layers, threads);
    out.grad_e0 += propagate_grad(*fwd.view2_adjacency, grad_v2->matrix(), fwd.layers, threads);
  }
  for (std::size_t k = 0; k < touched.size(); ++k) axpy(1.0, reg.grad.row(k), out.grad_e0.row(touched[k]));
  if (!all_finite(out.grad_e0.data())) throw NumericError("cal_loss: non-finite gradient");
  return out;
}

/// score[k][i] = Z_{users[k]} . Z_{M+i}; no masking.
inline Matrix full_predict(const ForwardOutput& fwd, std::span<const std::size_t> users) {
  Matrix scores(users.size(), fwd.n_items);
  for (std::size_t k = 0; k < users.size(); ++k) {
    if (users[k] >= fwd.n_users) throw StructuralError("full_predict: user " + std::to_string(users[k]) + " out of range");
    auto zu = fwd.z.row(users[k]);
    auto dst = scores.row(k);
    for (std::size_t i = 0; i < fwd.n_items; ++i) dst[i] = dot(zu, fwd.z.row(fwd.n_users + i));
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// e0.bin: "SSLREC01", u32 rows, u32 cols (little-endian), then rows*cols
// little-endian float32 values, row-major.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'S', 'L', 'R', 'E', 'C', '0', '1'};

/// Rounds every entry through float32, the precision checkpoints store.
inline Matrix round_to_float(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void save_embeddings(const std::filesystem::path& path, const Matrix& e0) {
  if (e0.rows() > UINT32_MAX || e0.cols() > UINT32_MAX) throw StructuralError("save_embeddings: matrix too large");
  std::string buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(buf, static_cast<std::uint32_t>(e0.rows()));
  detail::put_u32(buf, static_cast<std::uint32_t>(e0.cols()));
  buf.reserve(16 + 4 * e0.data().size());
  for (double v : e0.data()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Matrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw FormatError(path.string() + ": not an embedding checkpoint");
  const std::size_t rows = detail::get_u32(bytes.data() + 8);
  const std::size_t cols = detail::get_u32(bytes.data() + 12);
  if (bytes.size() != 16 + 4 * rows * cols) throw FormatError(path.string() + ": size does not match header");
  Matrix m(rows, cols);
  auto data = m.data();
  for (std::size_t k = 0; k < data.size(); ++k)
    data[k] = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes.data() + 16 + 4 * k)));
  return m;
}

inline void write_model_params(const ModelParams& p, KeyValues& kv) {
  kv.set("model", model_name(p.kind));
  kv.set("dim", p.dim);
  kv.set("layers", p.layers);
  kv.set("reg", p.reg);
  if (p.ssl_weight) kv.set("ssl_weight", *p.ssl_weight);
  if (p.temperature) kv.set("temperature", *p.temperature);
  if (p.dropout) kv.set("dropout", *p.dropout);
  if (p.noise) kv.set("noise", *p.noise);
  if (p.uniformity_weight) kv.set("uniformity_weight", *p.uniformity_weight);
}

inline ModelParams read_model_params(const KeyValues& kv) {
  ModelParams p;
  p.kind = parse_model_kind(kv.get("model"));
  p.dim = kv.get_count("dim");
  p.layers = kv.get_count("layers");
  p.reg = kv.get_real("reg");
  auto opt = [&](const char* key, std::optional<double>& field) {
    if (kv.find(key)) field = kv.get_real(key);
  };
  opt("ssl_weight", p.ssl_weight);
  opt("temperature", p.temperature);
  opt("dropout", p.dropout);
  opt("noise", p.noise);
  opt("uniformity_weight", p.uniformity_weight);
  p.validate();
  return p;
}

struct Checkpoint {
  KeyValues meta;
  Matrix e0;
};

/// Writes `meta` and `e0.bin` into `dir`.
inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  ckpt.meta.write(dir / "meta");
  save_embeddings(dir / "e0.bin", ckpt.e0);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint c;
  c.meta = KeyValues::read(dir / "meta");
  c.e0 = load_embeddings(dir / "e0.bin");
  return c;
}

}  // namespace sslrec
