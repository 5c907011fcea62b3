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

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sslrec/sparse.hpp"

using sslrec::CooEntry;
using sslrec::CsrMatrix;
using sslrec::Matrix;

namespace {

CsrMatrix random_csr(std::size_t rows, std::size_t cols, double density, std::mt19937_64& gen,
                     bool symmetric = false) {
  std::bernoulli_distribution coin(density);
  std::uniform_real_distribution<double> val(0.1, 2.0);
  std::vector<CooEntry> entries;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = symmetric ? r : 0; c < cols; ++c) {
      if (!coin(gen)) continue;
      const double v = val(gen);
      entries.push_back({r, c, v});
      if (symmetric && c != r) entries.push_back({c, r, v});
    }
  }
  // shuffled on purpose, from_coo must canonicalize
  std::shuffle(entries.begin(), entries.end(), gen);
  return CsrMatrix::from_coo(rows, cols, entries);
}

}  // namespace

TEST(FromCoo, EmptyEntries) {
  auto m = CsrMatrix::from_coo(2, 2, {});
  EXPECT_EQ(m.nnz(), 0u);
  EXPECT_EQ(m.n_rows(), 2u);
  m.check_invariants();
}

TEST(FromCoo, PermutationMatrix) {
  auto m = CsrMatrix::from_coo(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  EXPECT_EQ(m, sslrec::transpose(m));
  EXPECT_EQ(m.at(0, 1), 1.0);
  EXPECT_EQ(m.at(0, 0), 0.0);
}

TEST(FromCoo, MatchesDenseConstruction) {
  auto m = CsrMatrix::from_coo(2, 3, {{0, 2, 3.0}, {1, 1, 1.0}, {0, 0, 2.0}});
  const oracle::Dense expect{{2, 0, 3}, {0, 1, 0}};
  EXPECT_EQ(oracle::max_abs_diff(expect, m.to_dense()), 0.0);
  EXPECT_EQ(m.row_offsets()[2], 3u);
}

TEST(FromCoo, RejectsOutOfRangeAndDuplicates) {
  EXPECT_THROW(CsrMatrix::from_coo(2, 2, {{2, 0, 1.0}}), sslrec::StructuralError);
  EXPECT_THROW(CsrMatrix::from_coo(2, 2, {{0, 5, 1.0}}), sslrec::StructuralError);
  EXPECT_THROW(CsrMatrix::from_coo(2, 2, {{0, 1, 1.0}, {0, 1, 2.0}}), sslrec::StructuralError);
}

TEST(CsrMatrix, RawConstructorValidates) {
  EXPECT_THROW(CsrMatrix(2, 2, {0, 2, 1}, {0, 1}, {1, 1}), sslrec::StructuralError);
  EXPECT_THROW(CsrMatrix(1, 2, {0, 2}, {1, 0}, {1, 1}), sslrec::StructuralError);
  EXPECT_NO_THROW(CsrMatrix(1, 2, {0, 2}, {0, 1}, {1, 1}));
}

TEST(Spmm, IdentityAndZero) {
  std::mt19937_64 gen(1);
  const auto x = oracle::random_matrix(5, 3, gen);
  std::vector<CooEntry> eye;
  for (std::size_t i = 0; i < 5; ++i) eye.push_back({i, i, 1.0});
  EXPECT_EQ(sslrec::spmm(CsrMatrix::from_coo(5, 5, eye), x), x);
  EXPECT_EQ(sslrec::spmm(CsrMatrix(5, 5), x), Matrix(5, 3));
}

TEST(Spmm, Random6x6MatchesDenseOracle) {
  std::mt19937_64 gen(7);
  const auto a = random_csr(6, 6, 0.3, gen);
  const auto x = oracle::random_matrix(6, 4, gen);
  const auto expect = oracle::matmul(oracle::to_dense(a.to_dense()), oracle::to_dense(x));
  EXPECT_LE(oracle::max_abs_diff(expect, sslrec::spmm(a, x)), 1e-12);
}

TEST(Spmm, RandomShapesMatchDenseOracle) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen() % 50, m = 1 + gen() % 50, d = 1 + gen() % 8;
    const auto a = random_csr(n, m, 0.2, gen);
    const auto x = oracle::random_matrix(m, d, gen);
    const auto expect = oracle::matmul(oracle::to_dense(a.to_dense()), oracle::to_dense(x));
    EXPECT_LE(oracle::max_abs_diff(expect, sslrec::spmm(a, x)), 1e-12) << "trial " << trial;
  }
}

TEST(Spmm, DimensionMismatch) {
  EXPECT_THROW(sslrec::spmm(CsrMatrix(3, 4), Matrix(3, 2)), sslrec::StructuralError);
}

TEST(Spmm, ThreadCountDoesNotChangeBits) {
  std::mt19937_64 gen(3);
  const auto a = random_csr(200, 200, 0.05, gen);
  const auto x = oracle::random_matrix(200, 16, gen);
  const auto one = sslrec::spmm(a, x, 1);
  for (unsigned t : {2u, 3u, 8u}) EXPECT_EQ(sslrec::spmm(a, x, t), one) << t << " threads";
}

TEST(NormalizeSym, UnitDegrees) {
  auto a = CsrMatrix::from_coo(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  auto n = sslrec::normalize_sym(a);
  EXPECT_EQ(n.at(0, 1), 1.0);
  EXPECT_EQ(n.at(1, 0), 1.0);
}

TEST(NormalizeSym, Star) {
  // node 0 = u0, nodes 1, 2 = i0, i1
  auto a = CsrMatrix::from_coo(3, 3, {{0, 1, 1.0}, {1, 0, 1.0}, {0, 2, 1.0}, {2, 0, 1.0}});
  auto n = sslrec::normalize_sym(a);
  for (auto [r, c] : {std::pair{0, 1}, {1, 0}, {0, 2}, {2, 0}}) EXPECT_NEAR(n.at(r, c), 0.70710678118654752, 1e-15);
}

TEST(NormalizeSym, IsolatedNodeStaysZero) {
  auto a = CsrMatrix::from_coo(3, 3, {{0, 1, 1.0}, {1, 0, 1.0}});
  auto n = sslrec::normalize_sym(a);
  EXPECT_TRUE(n.row_cols(2).empty());
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(n.at(r, 2), 0.0);
}

TEST(NormalizeSym, Errors) {
  EXPECT_THROW(sslrec::normalize_sym(CsrMatrix(2, 3)), sslrec::StructuralError);
  EXPECT_THROW(sslrec::normalize_sym(CsrMatrix::from_coo(2, 2, {{0, 1, -1.0}, {1, 0, -1.0}})),
               sslrec::StructuralError);
}

TEST(NormalizeSym, PropertiesOnRandomSymmetric) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + gen() % 40;
    const auto a = random_csr(n, n, 0.15, gen, true);
    const auto out = sslrec::normalize_sym(a);
    out.check_invariants();
    // exact symmetry
    EXPECT_EQ(out, sslrec::transpose(out));
    // pattern preserved
    EXPECT_EQ(out.row_offsets().size(), a.row_offsets().size());
    EXPECT_TRUE(std::equal(out.col_indices().begin(), out.col_indices().end(), a.col_indices().begin(),
                           a.col_indices().end()));
    const auto expect = oracle::normalize_sym(oracle::to_dense(a.to_dense()));
    EXPECT_LE(oracle::max_abs_diff(expect, out.to_dense()), 1e-14);
  }
}

TEST(Transpose, Examples) {
  auto a = CsrMatrix::from_coo(2, 3, {{0, 0, 2.0}, {0, 2, 3.0}, {1, 1, 1.0}});
  auto t = sslrec::transpose(a);
  EXPECT_EQ(t.n_rows(), 3u);
  EXPECT_EQ(oracle::max_abs_diff(oracle::Dense{{2, 0}, {0, 1}, {3, 0}}, t.to_dense()), 0.0);
  t.check_invariants();

  auto e = sslrec::transpose(CsrMatrix(4, 7));
  EXPECT_EQ(e.n_rows(), 7u);
  EXPECT_EQ(e.n_cols(), 4u);
  EXPECT_EQ(e.nnz(), 0u);
}

TEST(Transpose, InvolutionOnRandom) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = random_csr(1 + gen() % 30, 1 + gen() % 30, 0.2, gen);
    EXPECT_EQ(sslrec::transpose(sslrec::transpose(a)), a);
    const auto s = random_csr(10, 10, 0.3, gen, true);
    EXPECT_EQ(sslrec::transpose(s), s);
  }
}
