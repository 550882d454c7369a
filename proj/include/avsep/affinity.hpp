// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/ops.hpp"

#include <cstdlib>
#include <memory>
#include <utility>
#include <vector>

namespace avsep {

/// Banded diagonal masks D^k over an N x M affinity grid. With the
/// audio/visual rate ratio r, D^k has a 1 at (i, j) — 1-based — iff
/// r (j - k) + 1 <= i <= r (j - k + 1); entries outside the grid are
/// dropped. k runs over 0 .. 2 * offset_range, and k - offset_range is
/// the signed frame offset the band encodes.
struct DiagonalMaskSet {
  int n_rows = 0;  // N, audio frames
  int n_cols = 0;  // M, visual frames
  int fa_over_fv = 4;
  int offset_range = 9;
  // per k, 0-based (i, j) pairs in row-major order
  std::vector<std::vector<std::pair<int, int>>> entries;

  int count() const { return 2 * offset_range + 1; }
};

inline DiagonalMaskSet build_diagonal_masks(int n_rows, int n_cols, int fa_over_fv,
                                            int offset_range) {
  if (n_rows < 1 || n_cols < 1)
    throw std::invalid_argument("build_diagonal_masks: grid must be at least 1 x 1");
  if (fa_over_fv < 1 || offset_range < 0)
    throw std::invalid_argument("build_diagonal_masks: bad rate ratio or offset range");
  DiagonalMaskSet set;
  set.n_rows = n_rows;
  set.n_cols = n_cols;
  set.fa_over_fv = fa_over_fv;
  set.offset_range = offset_range;
  set.entries.resize(set.count());
  const int r = fa_over_fv;
  for (int k = 0; k < set.count(); ++k) {
    auto& e = set.entries[k];
    for (int i1 = 1; i1 <= n_rows; ++i1) {
      // r (j - k) + 1 <= i <= r (j - k + 1) has the unique solution
      // j = k + ceil(i / r) - 1 in 1-based indices
      const int j1 = k + (i1 + r - 1) / r - 1;
      if (j1 >= 1 && j1 <= n_cols) e.emplace_back(i1 - 1, j1 - 1);
    }
  }
  return set;
}

/// Sum of affinity mass under each mask, optionally restricted to audio
/// rows [row_begin, row_end). One score per k.
template <typename S>
Var<S> band_scores(Var<S> A, std::shared_ptr<const DiagonalMaskSet> masks, int row_begin = 0,
                   int row_end = -1) {
  Graph<S>& g = *A.g;
  const Tensor<S>& av = A.val();
  if (av.rank() != 2 || av.rows() != masks->n_rows || av.cols() != masks->n_cols)
    throw std::invalid_argument("band_scores: affinity " + shape_str(av.shape()) +
                                " does not match mask grid");
  if (row_end < 0) row_end = masks->n_rows;
  Tensor<S> out({masks->count()});
  for (int k = 0; k < masks->count(); ++k) {
    S s = 0;
    for (auto [i, j] : masks->entries[k])
      if (i >= row_begin && i < row_end) s += av.mat()(i, j);
    out[k] = s;
  }
  const bool rg = A.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, A, masks, row_begin, row_end]() {
      const Tensor<S>& go = g.grad(id);
      auto dA = g.grad_acc(A.id).mat();
      for (int k = 0; k < masks->count(); ++k)
        for (auto [i, j] : masks->entries[k])
          if (i >= row_begin && i < row_end) dA(i, j) += go[k];
    });
  }
  return {&g, id};
}

/// Cross-modal identity matrix: Gamma = sum_k p_k D^k.
template <typename S>
Var<S> tile_identity(Var<S> p, std::shared_ptr<const DiagonalMaskSet> masks) {
  Graph<S>& g = *p.g;
  if (p.val().size() != masks->count())
    throw std::invalid_argument("tile_identity: posterior length " +
                                std::to_string(p.val().size()) + " vs " +
                                std::to_string(masks->count()) + " masks");
  Tensor<S> out({masks->n_rows, masks->n_cols});
  for (int k = 0; k < masks->count(); ++k)
    for (auto [i, j] : masks->entries[k]) out.mat()(i, j) += p.val()[k];
  const bool rg = p.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, p, masks]() {
      auto go = g.grad(id).mat();
      Tensor<S>& dp = g.grad_acc(p.id);
      for (int k = 0; k < masks->count(); ++k) {
        S s = 0;
        for (auto [i, j] : masks->entries[k]) s += go(i, j);
        dp[k] += s;
      }
    });
  }
  return {&g, id};
}

/// Row-stochastic affinity between projected audio and visual features:
/// A_ij = row_softmax(cos(S_i w_s, V_j w_v)), cosine with an eps norm floor.
template <typename S>
Var<S> compute_affinity(Var<S> sbar, Var<S> vbar, Var<S> ws, Var<S> wv, S tau_row = S(1),
                        S eps = S(1e-8)) {
  Var<S> ps = row_l2_normalize(matmul(sbar, ws), eps);
  Var<S> pv = row_l2_normalize(matmul(vbar, wv), eps);
  Var<S> cos = matmul(ps, pv, false, true);
  return row_softmax(cos, tau_row);
}

/// Posterior over frame offsets: softmax of band scores at temperature tau.
template <typename S>
Var<S> offset_posterior(Var<S> A, std::shared_ptr<const DiagonalMaskSet> masks, S tau = S(0.1),
                        int row_begin = 0, int row_end = -1) {
  return row_softmax(band_scores(A, masks, row_begin, row_end), tau);
}

/// Fused visual features: V_hat_i = sum_j (A_ij + gamma Gamma_ij) (w_o V_j).
template <typename S>
Var<S> fuse_visual(Var<S> A, Var<S> gamma_mat, Var<S> vbar, Var<S> wo, S gamma = S(1)) {
  Var<S> weights = add(A, mul_const(gamma_mat, gamma));
  return matmul(weights, matmul(vbar, wo));
}

// ---------------------------------------------------------------------------
// Eval-side helpers on plain matrices. These reuse the graph ops on a
// scratch tape so there is a single implementation of the math.

inline RowMatrixXd affinity_matrix(const RowMatrixXd& sbar, const RowMatrixXd& vbar,
                                   const RowMatrixXd& ws, const RowMatrixXd& wv,
                                   double tau_row = 1.0) {
  Graph<double> g;
  Var<double> A = compute_affinity(g.value(Tensor<double>::from_matrix(sbar)),
                                   g.value(Tensor<double>::from_matrix(vbar)),
                                   g.value(Tensor<double>::from_matrix(ws)),
                                   g.value(Tensor<double>::from_matrix(wv)), tau_row);
  return RowMatrixXd(A.val().mat());
}

/// Identity-projection affinity straight from feature matrices.
inline RowMatrixXd affinity_matrix(const RowMatrixXd& s, const RowMatrixXd& v,
                                   double tau_row = 1.0) {
  const int c = int(s.cols());
  const RowMatrixXd eye = RowMatrixXd::Identity(c, c);
  return affinity_matrix(s, v, eye, eye, tau_row);
}

inline Eigen::VectorXd offset_posterior_eval(const RowMatrixXd& A, const DiagonalMaskSet& masks,
                                             double tau = 0.1, int row_begin = 0,
                                             int row_end = -1) {
  Graph<double> g;
  auto m = std::make_shared<const DiagonalMaskSet>(masks);
  Var<double> p = offset_posterior(g.value(Tensor<double>::from_matrix(A)), m, tau, row_begin,
                                   row_end);
  return Eigen::VectorXd(p.val().vec());
}

/// Signed frame offset whose band captures the most affinity mass;
/// ties break toward zero offset.
inline int estimate_offset(const RowMatrixXd& A, const DiagonalMaskSet& masks,
                           int row_begin = 0, int row_end = -1) {
  if (row_end < 0) row_end = masks.n_rows;
  int best_k = masks.offset_range;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < masks.count(); ++k) {
    double s = 0;
    for (auto [i, j] : masks.entries[k])
      if (i >= row_begin && i < row_end) s += A(i, j);
    const int off = k - masks.offset_range;
    const int best_off = best_k - masks.offset_range;
    if (s > best || (s == best && std::abs(off) < std::abs(best_off))) {
      best = s;
      best_k = k;
    }
  }
  return best_k - masks.offset_range;
}

// CSV (6 significant digits) and binary 8-bit PGM exports, for visual
// inspection of affinity structure.
void affinity_to_csv(const std::string& path, const RowMatrixXd& A);
void affinity_to_pgm(const std::string& path, const RowMatrixXd& A);

}  // namespace avsep
