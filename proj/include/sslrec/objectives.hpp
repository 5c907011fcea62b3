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
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"

// Loss library. Every loss uses mean reduction over its batch (except l2_reg,
// which sums over the rows it is given) and returns its value together with
// the analytic gradient with respect to its inputs. Rows fed to InfoNCE,
// alignment and uniformity are L2-normalized internally and the gradient is
// taken through that normalization.

namespace sslrec {

/// Scalar loss with a named breakdown; total is the sum of the components.
struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;

  void add(const std::string& name, double value) {
    components[name] += value;
    total += value;
  }

  LossValue& operator+=(const LossValue& other) {
    for (const auto& [k, v] : other.components) components[k] += v;
    total += other.total;
    return *this;
  }
};

struct BprResult {
  LossValue loss;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

/// Loss over two row-aligned inputs (views, or user/item pairs).
struct PairLoss {
  LossValue loss;
  Matrix grad_a;
  Matrix grad_b;
};

struct RowsLoss {
  LossValue loss;
  Matrix grad;
};

namespace detail {

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

inline Normalized normalize_rows(const Matrix& z, const char* what) {
  Normalized out{Matrix(z.rows(), z.cols()), std::vector<double>(z.rows())};
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double n = std::sqrt(squared_norm(z.row(r)));
    if (!(n > 0.0) || !std::isfinite(n))
      throw NumericError(std::string(what) + ": row " + std::to_string(r) + " has zero or non-finite norm");
    out.norms[r] = n;
    auto src = z.row(r);
    auto dst = out.unit.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] / n;
  }
  return out;
}

/// Maps a gradient w.r.t. normalized rows back to the raw rows:
/// dz = (du - u (u . du)) / |z|.
inline Matrix backprop_normalize(const Normalized& n, const Matrix& grad_unit) {
  Matrix g(grad_unit.rows(), grad_unit.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto u = n.unit.row(r);
    auto du = grad_unit.row(r);
    const double proj = dot(u, du);
    auto dst = g.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = (du[c] - u[c] * proj) / n.norms[r];
  }
  return g;
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw StructuralError(std::string(what) + ": shape mismatch");
  if (a.rows() == 0) throw StructuralError(std::string(what) + ": empty batch");
}

}  // namespace detail

/// mean over the batch of -ln sigmoid(s_pos - s_neg), via softplus.
inline BprResult bpr_loss(std::span<const double> s_pos, std::span<const double> s_neg) {
  if (s_pos.size() != s_neg.size()) throw StructuralError("bpr_loss: length mismatch");
  if (s_pos.empty()) throw StructuralError("bpr_loss: empty batch");
  if (!all_finite(s_pos) || !all_finite(s_neg)) throw NumericError("bpr_loss: non-finite score");
  const double inv_b = 1.0 / static_cast<double>(s_pos.size());
  BprResult out;
  out.grad_pos.resize(s_pos.size());
  out.grad_neg.resize(s_pos.size());
  double sum = 0.0;
  for (std::size_t b = 0; b < s_pos.size(); ++b) {
    const double delta = s_pos[b] - s_neg[b];
    sum += detail::softplus(-delta);
    const double g = inv_b * detail::sigmoid(-delta);  // (1 - sigma(delta)) / B
    out.grad_pos[b] = -g;
    out.grad_neg[b] = g;
  }
  out.loss.add("rec", sum * inv_b);
  return out;
}

/// InfoNCE between two views with in-batch negatives: row i of z1 is
/// contrasted against every row of z2, with row i of z2 as the positive.
inline PairLoss infonce(const Matrix& z1, const Matrix& z2, double tau) {
  detail::require_same_shape(z1, z2, "infonce");
  if (!(tau > 0.0)) throw ConfigError("infonce: temperature must be positive");
  const std::size_t batch = z1.rows();
  const auto a = detail::normalize_rows(z1, "infonce view 1");
  const auto b = detail::normalize_rows(z2, "infonce view 2");
  const double inv_b = 1.0 / static_cast<double>(batch);

  Matrix grad_ua(batch, z1.cols()), grad_ub(batch, z2.cols());
  std::vector<double> logits(batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < batch; ++j) {
      logits[j] = dot(a.unit.row(i), b.unit.row(j)) / tau;
      max_logit = std::max(max_logit, logits[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < batch; ++j) denom += std::exp(logits[j] - max_logit);
    const double lse = max_logit + std::log(denom);
    sum += lse - logits[i];
    for (std::size_t j = 0; j < batch; ++j) {
      const double p = std::exp(logits[j] - lse);
      // dL/ds_ij
      const double g = inv_b * (p - (i == j ? 1.0 : 0.0)) / tau;
      if (g == 0.0) continue;
      axpy(g, b.unit.row(j), grad_ua.row(i));
      axpy(g, a.unit.row(i), grad_ub.row(j));
    }
  }
  PairLoss out;
  out.loss.add("ssl", sum * inv_b);
  out.grad_a = detail::backprop_normalize(a, grad_ua);
  out.grad_b = detail::backprop_normalize(b, grad_ub);
  return out;
}

/// mean squared distance between row-aligned normalized pairs, in [0, 4].
inline PairLoss alignment_loss(const Matrix& zu, const Matrix& zi) {
  detail::require_same_shape(zu, zi, "alignment_loss");
  const auto a = detail::normalize_rows(zu, "alignment user rows");
  const auto b = detail::normalize_rows(zi, "alignment item rows");
  const double inv_b = 1.0 / static_cast<double>(zu.rows());
  Matrix grad_ua(zu.rows(), zu.cols()), grad_ub(zi.rows(), zi.cols());
  double sum = 0.0;
  for (std::size_t r = 0; r < zu.rows(); ++r) {
    auto ua = a.unit.row(r);
    auto ub = b.unit.row(r);
    auto ga = grad_ua.row(r);
    auto gb = grad_ub.row(r);
    for (std::size_t c = 0; c < ua.size(); ++c) {
      const double d = ua[c] - ub[c];
      sum += d * d;
      ga[c] = 2.0 * inv_b * d;
      gb[c] = -2.0 * inv_b * d;
    }
  }
  PairLoss out;
  out.loss.add("align", sum * inv_b);
  out.grad_a = detail::backprop_normalize(a, grad_ua);
  out.grad_b = detail::backprop_normalize(b, grad_ub);
  return out;
}

/// log of the mean over pairs i<j of exp(-2 |u_i - u_j|^2) on normalized rows.
/// Always <= 0, with equality iff all normalized rows coincide.
inline RowsLoss uniformity_loss(const Matrix& z) {
  const std::size_t batch = z.rows();
  if (batch < 2) throw StructuralError("uniformity_loss: needs at least two rows");
  const auto u = detail::normalize_rows(z, "uniformity rows");
  // Exponents x_ij = -2 d_ij^2 <= 0; stabilize with their max.
  std::vector<double> x(batch * batch, 0.0);
  double max_x = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = i + 1; j < batch; ++j) {
      double d2 = 0.0;
      auto ui = u.unit.row(i);
      auto uj = u.unit.row(j);
      for (std::size_t c = 0; c < ui.size(); ++c) d2 += (ui[c] - uj[c]) * (ui[c] - uj[c]);
      x[i * batch + j] = -2.0 * d2;
      max_x = std::max(max_x, x[i * batch + j]);
    }
  }
  double scaled_sum = 0.0;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = i + 1; j < batch; ++j) scaled_sum += std::exp(x[i * batch + j] - max_x);
  const double n_pairs = 0.5 * static_cast<double>(batch) * static_cast<double>(batch - 1);
  const double loss = max_x + std::log(scaled_sum) - std::log(n_pairs);

  Matrix grad_u(batch, z.cols());
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = i + 1; j < batch; ++j) {
      // dL/du_i = sum_j w_ij/S * (-4)(u_i - u_j)
      const double w = std::exp(x[i * batch + j] - max_x) / scaled_sum;
      auto ui = u.unit.row(i);
      auto uj = u.unit.row(j);
      auto gi = grad_u.row(i);
      auto gj = grad_u.row(j);
      for (std::size_t c = 0; c < ui.size(); ++c) {
        const double g = -4.0 * w * (ui[c] - uj[c]);
        gi[c] += g;
        gj[c] -= g;
      }
    }
  }
  RowsLoss out;
  out.loss.add("uniform", std::min(loss, 0.0));
  out.grad = detail::backprop_normalize(u, grad_u);
  return out;
}

/// lambda/2 * sum of squared row norms; gradient lambda * row.
inline RowsLoss l2_reg(const Matrix& rows, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("l2_reg: lambda must be nonnegative");
  RowsLoss out;
  out.grad = Matrix(rows.rows(), rows.cols());
  double sum = 0.0;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    sum += squared_norm(rows.row(r));
    auto src = rows.row(r);
    auto dst = out.grad.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = lambda * src[c];
  }
  out.loss.add("reg", 0.5 * lambda * sum);
  return out;
}

}  // namespace sslrec
