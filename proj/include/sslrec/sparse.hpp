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
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sslrec/dense.hpp"
#include "sslrec/error.hpp"

namespace sslrec {

struct CooEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

// =============================================================================
// CsrMatrix
//
// INVARIANT:
// - row_offsets has n_rows + 1 nondecreasing entries, first 0, last nnz
// - column indices strictly ascending within each row, all < n_cols
// Every factory validates these; every operation in this header preserves
// them.
// =============================================================================
class CsrMatrix {
 public:
  CsrMatrix() : row_offsets_(1, 0) {}
  CsrMatrix(std::size_t n_rows, std::size_t n_cols)
      : n_rows_(n_rows), n_cols_(n_cols), row_offsets_(n_rows + 1, 0) {}

  /// Builds from raw CSR arrays and validates the canonical form.
  CsrMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<std::size_t> row_offsets,
            std::vector<std::size_t> col_indices, std::vector<double> values)
      : n_rows_(n_rows),
        n_cols_(n_cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    check_invariants();
  }

  static CsrMatrix from_coo(std::size_t n_rows, std::size_t n_cols, std::vector<CooEntry> entries) {
    for (const auto& e : entries) {
      if (e.row >= n_rows || e.col >= n_cols)
        throw StructuralError("from_coo: entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                              ") outside " + std::to_string(n_rows) + "x" + std::to_string(n_cols));
    }
    std::sort(entries.begin(), entries.end(), [](const CooEntry& a, const CooEntry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> offsets(n_rows + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(entries.size());
    vals.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (k > 0 && entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col)
        throw StructuralError("from_coo: duplicate entry (" + std::to_string(entries[k].row) + "," +
                              std::to_string(entries[k].col) + ")");
      ++offsets[entries[k].row + 1];
      cols.push_back(entries[k].col);
      vals.push_back(entries[k].value);
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return CsrMatrix(n_rows, n_cols, std::move(offsets), std::move(cols), std::move(vals));
  }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t nnz() const { return col_indices_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const std::size_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_indices_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }

  /// Stored value at (r, c), or 0 when the entry is absent.
  double at(std::size_t r, std::size_t c) const {
    auto cols = row_cols(r);
    auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return row_values(r)[static_cast<std::size_t>(it - cols.begin())];
  }

  Matrix to_dense() const {
    Matrix d(n_rows_, n_cols_);
    for (std::size_t r = 0; r < n_rows_; ++r) {
      auto cols = row_cols(r);
      auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) d(r, cols[k]) = vals[k];
    }
    return d;
  }

  void check_invariants() const {
    if (row_offsets_.size() != n_rows_ + 1) throw StructuralError("csr: row_offsets length != n_rows + 1");
    if (row_offsets_.front() != 0) throw StructuralError("csr: row_offsets[0] != 0");
    if (row_offsets_.back() != col_indices_.size()) throw StructuralError("csr: row_offsets[n_rows] != nnz");
    if (values_.size() != col_indices_.size()) throw StructuralError("csr: values/col_indices length mismatch");
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (row_offsets_[r] > row_offsets_[r + 1]) throw StructuralError("csr: row_offsets decreasing");
      for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        if (col_indices_[k] >= n_cols_) throw StructuralError("csr: column index out of range");
        if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1])
          throw StructuralError("csr: columns not strictly increasing in row " + std::to_string(r));
      }
    }
  }

  bool operator==(const CsrMatrix&) const = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

namespace detail {

/// Runs body(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Each index is owned by exactly one chunk.
template <typename Body>
void parallel_rows(std::size_t n, unsigned threads, Body&& body) {
  if (threads <= 1 || n < 2 * static_cast<std::size_t>(threads)) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace detail

/// result[r] = sum over stored (r, c, v) of v * x[c]. Output rows are computed
/// independently, so the result is identical for any thread count.
inline Matrix spmm(const CsrMatrix& a, const Matrix& x, unsigned threads = 1) {
  if (a.n_cols() != x.rows())
    throw StructuralError("spmm: a is " + std::to_string(a.n_rows()) + "x" + std::to_string(a.n_cols()) +
                          " but x has " + std::to_string(x.rows()) + " rows");
  Matrix out(a.n_rows(), x.cols());
  detail::parallel_rows(a.n_rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      auto cols = a.row_cols(r);
      auto vals = a.row_values(r);
      auto dst = out.row(r);
      for (std::size_t k = 0; k < cols.size(); ++k) axpy(vals[k], x.row(cols[k]), dst);
    }
  });
  return out;
}

/// D^(-1/2) A D^(-1/2) with D the row sums of A. Zero-degree rows and columns
/// come out as zero rows (their entries are dropped).
inline CsrMatrix normalize_sym(const CsrMatrix& a) {
  if (a.n_rows() != a.n_cols()) throw StructuralError("normalize_sym: matrix is not square");
  const std::size_t n = a.n_rows();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double deg = 0.0;
    for (double v : a.row_values(r)) {
      if (v < 0.0) throw StructuralError("normalize_sym: negative value in row " + std::to_string(r));
      deg += v;
    }
    if (deg > 0.0) inv_sqrt[r] = 1.0 / std::sqrt(deg);
  }
  std::vector<std::size_t> offsets(n + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  cols.reserve(a.nnz());
  vals.reserve(a.nnz());
  for (std::size_t r = 0; r < n; ++r) {
    if (inv_sqrt[r] > 0.0) {
      auto rc = a.row_cols(r);
      auto rv = a.row_values(r);
      for (std::size_t k = 0; k < rc.size(); ++k) {
        if (inv_sqrt[rc[k]] == 0.0) continue;
        cols.push_back(rc[k]);
        // Same operation order for (i,j) and (j,i) keeps the output exactly symmetric.
        vals.push_back(rv[k] * (inv_sqrt[r] * inv_sqrt[rc[k]]));
      }
    }
    offsets[r + 1] = cols.size();
  }
  return CsrMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

inline CsrMatrix transpose(const CsrMatrix& a) {
  std::vector<std::size_t> offsets(a.n_cols() + 1, 0);
  for (std::size_t c : a.col_indices()) ++offsets[c + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::size_t> cols(a.nnz());
  std::vector<double> vals(a.nnz());
  // Rows are visited in ascending order, so each output row fills ascending.
  for (std::size_t r = 0; r < a.n_rows(); ++r) {
    auto rc = a.row_cols(r);
    auto rv = a.row_values(r);
    for (std::size_t k = 0; k < rc.size(); ++k) {
      const std::size_t dst = cursor[rc[k]]++;
      cols[dst] = r;
      vals[dst] = rv[k];
    }
  }
  return CsrMatrix(a.n_cols(), a.n_rows(), std::move(offsets), std::move(cols), std::move(vals));
}

}  // namespace sslrec
