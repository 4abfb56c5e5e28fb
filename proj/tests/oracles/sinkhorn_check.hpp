#pragma once

// Sinkhorn checks shared by the unit suite and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "oracles/oracles.hpp"
#include "trustrec/rectifier.hpp"
#include "trustrec/sparse.hpp"

namespace sinkhorn_check {

inline trustrec::CsrMatrix from_dense(const oracle::Dense& d) {
  trustrec::CsrBuilder b(d.size(), d.empty() ? 0 : d[0].size());
  for (const auto& row : d) {
    for (std::uint32_t c = 0; c < row.size(); ++c)
      if (row[c] != 0.0) b.push(c, row[c]);
    b.end_row();
  }
  return b.finish();
}

// Largest entrywise distance between the matching of a scaled permutation
// matrix and the permutation itself, over `cases` random instances
// (half of them diagonal).
inline double permutation_error(std::size_t cases, double eps, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 1 + gen() % 30;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    if (c % 2) std::shuffle(perm.begin(), perm.end(), gen);
    oracle::Dense a = oracle::zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) a[i][perm[i]] = scale(gen);
    const auto m = trustrec::sinkhorn(from_dense(a), eps, 50, 0.0);
    const auto p = m.values.to_dense();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(p(i, j) - (j == perm[i] ? 1.0 : 0.0)));
  }
  return worst;
}

struct DenseOutcome {
  std::size_t matrices = 0;
  std::size_t max_iterations = 0;
  double worst_deviation = 0.0;
  double worst_entry_gap = 0.0;
};

// Random strictly positive dense matrices up to max_n x max_n, solved to
// tolerance `tol` within `max_iter` iterations and compared entrywise with
// the dense alternating-normalization oracle run for the same count.
inline DenseOutcome dense_vs_oracle(std::size_t count, std::size_t max_n, double tol, std::size_t max_iter,
                                    std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  DenseOutcome out;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t n = 1 + gen() % max_n;
    oracle::Dense a = oracle::zeros(n, n);
    for (auto& row : a)
      for (auto& x : row) x = std::exp(nd(gen));
    const auto m = trustrec::sinkhorn(from_dense(a), 1e-12, max_iter, tol);
    const auto want = oracle::sinkhorn(a, m.iterations);
    const auto got = m.values.to_dense();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.worst_entry_gap = std::max(out.worst_entry_gap, std::abs(got(i, j) - want[i][j]));
    out.worst_deviation = std::max(out.worst_deviation, trustrec::marginal_deviation(m.values));
    out.max_iterations = std::max(out.max_iterations, m.iterations);
    ++out.matrices;
  }
  return out;
}

struct SparseOutcome {
  std::size_t cases = 0;
  std::size_t violations = 0;  // final deviation above the row-normalized start
};

// Top-K affinities from random anchors and noisy projections.
inline SparseOutcome sparse_topk(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  SparseOutcome out;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 20 + gen() % 200, d = 8, k = 1 + gen() % 20;
    trustrec::Matrix<double> emb(n, d), z(n, d);
    for (auto& x : emb.flat()) x = nd(gen);
    const auto anchors = trustrec::anchors_from_embeddings(emb);
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0;
      for (std::size_t a = 0; a < d; ++a) {
        z(i, a) = anchors.rows(i, a) + 0.7 * nd(gen);
        norm += z(i, a) * z(i, a);
      }
      for (std::size_t a = 0; a < d; ++a) z(i, a) /= std::sqrt(norm);
    }
    const auto aff = trustrec::build_affinity(anchors, z, k, 0.1);
    const auto m = trustrec::sinkhorn(aff, 1e-8, 50, 1e-4);
    out.violations += m.final_deviation > m.initial_deviation ? 1 : 0;
    ++out.cases;
  }
  return out;
}

}  // namespace sinkhorn_check
