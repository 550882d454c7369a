// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/affinity.hpp"
#include "avsep/rng.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace avsep;
using namespace avsep::test;

namespace {

std::shared_ptr<const DiagonalMaskSet> masks_of(int n, int m, int r = 4, int range = 9) {
  return std::make_shared<const DiagonalMaskSet>(build_diagonal_masks(n, m, r, range));
}

}  // namespace

TEST_CASE("diagonal masks match the banded definition") {
  const auto set = build_diagonal_masks(40, 12, 4, 9);

  // zero offset (k = 9): the 9th video column ties audio rows 1..4
  std::set<std::pair<int, int>> k9(set.entries[9].begin(), set.entries[9].end());
  for (int i1 = 1; i1 <= 4; ++i1) CHECK(k9.count({i1 - 1, 8}) == 1);
  CHECK(k9.count({4, 8}) == 0);

  // k = 0, first column ties rows 5..8
  std::set<std::pair<int, int>> k0(set.entries[0].begin(), set.entries[0].end());
  for (int i1 = 5; i1 <= 8; ++i1) CHECK(k0.count({i1 - 1, 0}) == 1);
  CHECK(k0.count({3, 0}) == 0);
}

TEST_CASE("diagonal masks vs exhaustive brute force, N=16 M=8") {
  const int N = 16, M = 8, r = 4, range = 9;
  const auto set = build_diagonal_masks(N, M, r, range);
  REQUIRE(set.count() == 19);
  for (int k = 0; k < set.count(); ++k) {
    std::set<std::pair<int, int>> got(set.entries[k].begin(), set.entries[k].end());
    std::set<std::pair<int, int>> want;
    for (int i1 = 1; i1 <= N; ++i1)
      for (int j1 = 1; j1 <= M; ++j1)
        if (r * (j1 - k) + 1 <= i1 && i1 <= r * (j1 - k + 1)) want.insert({i1 - 1, j1 - 1});
    CHECK(got == want);
  }
  // each row has at most one active column per k
  for (int k = 0; k < set.count(); ++k) {
    std::set<int> rows;
    for (auto [i, j] : set.entries[k]) CHECK(rows.insert(i).second);
  }
}

TEST_CASE("affinity of a single visual frame is an all-ones column") {
  Rng rng(31);
  const RowMatrixXd s = random_tensor(rng, {6, 4}).mat();
  const RowMatrixXd v = random_tensor(rng, {1, 4}).mat();
  const RowMatrixXd A = affinity_matrix(s, v);
  REQUIRE(A.cols() == 1);
  for (int i = 0; i < 6; ++i) CHECK(A(i, 0) == doctest::Approx(1.0));
}

TEST_CASE("identical visual rows split the softmax evenly") {
  Rng rng(32);
  const RowMatrixXd s = random_tensor(rng, {5, 3}).mat();
  RowMatrixXd v(2, 3);
  v.row(0) << 0.3, -0.6, 1.1;
  v.row(1) = v.row(0);
  const RowMatrixXd A = affinity_matrix(s, v);
  for (int i = 0; i < 5; ++i) {
    CHECK(A(i, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(A(i, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("affinity matches a direct normalize-dot-softmax oracle") {
  Rng rng(33);
  const auto st = random_tensor(rng, {5, 3});
  const auto vt = random_tensor(rng, {3, 3});
  const auto ws = random_tensor(rng, {3, 3});
  const auto wv = random_tensor(rng, {3, 3});
  const RowMatrixXd A = affinity_matrix(st.mat(), vt.mat(), ws.mat(), wv.mat(), 1.0);

  const RowMatrixXd ps = st.mat() * ws.mat(), pv = vt.mat() * wv.mat();
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd cos(3);
    for (int j = 0; j < 3; ++j)
      cos(j) = ps.row(i).dot(pv.row(j)) /
               (std::max(ps.row(i).norm(), 1e-8) * std::max(pv.row(j).norm(), 1e-8));
    const Eigen::VectorXd e = (cos.array() - cos.maxCoeff()).exp();
    const Eigen::VectorXd want = e / e.sum();
    for (int j = 0; j < 3; ++j) CHECK(A(i, j) == doctest::Approx(want(j)).epsilon(1e-6));
  }
}

TEST_CASE("affinity rows are stochastic even with zero feature rows") {
  Rng rng(34);
  RowMatrixXd s = random_tensor(rng, {6, 4}).mat();
  s.row(2).setZero();
  const RowMatrixXd v = random_tensor(rng, {5, 4}).mat();
  const RowMatrixXd A = affinity_matrix(s, v);
  for (int i = 0; i < A.rows(); ++i) CHECK(A.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(A.allFinite());
}

TEST_CASE("affinity is invariant to positive row rescaling") {
  Rng rng(35);
  RowMatrixXd s = random_tensor(rng, {6, 4}).mat();
  const RowMatrixXd v = random_tensor(rng, {5, 4}).mat();
  const RowMatrixXd A1 = affinity_matrix(s, v);
  s.row(1) *= 37.5;
  s.row(4) *= 0.003;
  const RowMatrixXd A2 = affinity_matrix(s, v);
  CHECK((A1 - A2).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("offset posterior: uniform affinity has equal interior scores") {
  // M is large enough that every k >= 1 keeps its full band in-grid
  const int N = 76, M = 40;
  auto masks = masks_of(N, M);
  const RowMatrixXd A = RowMatrixXd::Constant(N, M, 1.0 / M);
  Graph<double> g;
  Var<double> scores = band_scores(g.value(Tensor<double>::from_matrix(A)), masks);
  for (int k = 1; k <= 18; ++k)
    CHECK(scores.val()[k] == doctest::Approx(scores.val()[9]).epsilon(1e-12));
  CHECK(scores.val()[0] < scores.val()[9]);  // k = 0 is truncated at the top rows
}

TEST_CASE("posterior concentrates on a hand-built band") {
  const int N = 60, M = 24;
  auto masks = masks_of(N, M);
  RowMatrixXd A = RowMatrixXd::Constant(N, M, 1e-4);
  const int kstar = 12;
  for (auto [i, j] : masks->entries[kstar]) A(i, j) = 1.0 / 4;
  const Eigen::VectorXd p = offset_posterior_eval(A, *masks, 0.1);
  int arg = 0;
  for (int k = 1; k < 19; ++k)
    if (p(k) > p(arg)) arg = k;
  CHECK(arg == kstar);
  CHECK(p(kstar) > 0.99);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("band scores ignore entries outside every mask") {
  const int N = 24, M = 12;
  auto masks = masks_of(N, M);
  Rng rng(36);
  RowMatrixXd A = random_tensor(rng, {N, M}, 0.0, 1.0).mat();

  std::set<std::pair<int, int>> covered;
  for (const auto& e : masks->entries) covered.insert(e.begin(), e.end());

  Graph<double> g;
  const auto s1 = band_scores(g.value(Tensor<double>::from_matrix(A)), masks);
  // permute uncovered entries
  std::vector<double> vals;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < M; ++j)
      if (!covered.count({i, j})) vals.push_back(A(i, j));
  std::rotate(vals.begin(), vals.begin() + vals.size() / 3, vals.end());
  size_t idx = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < M; ++j)
      if (!covered.count({i, j})) A(i, j) = vals[idx++];
  const auto s2 = band_scores(g.value(Tensor<double>::from_matrix(A)), masks);
  for (int k = 0; k < 19; ++k) CHECK(s1.val()[k] == s2.val()[k]);
}

TEST_CASE("tiling the posterior over masks") {
  const int N = 16, M = 8;
  auto masks = masks_of(N, M);
  Graph<double> g;

  SUBCASE("one-hot posterior reproduces its mask") {
    Tensor<double> p({19});
    p[7] = 1.0;
    Var<double> G = tile_identity(g.value(p), masks);
    RowMatrixXd want = RowMatrixXd::Zero(N, M);
    for (auto [i, j] : masks->entries[7]) want(i, j) = 1.0;
    CHECK((G.val().mat() - want).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("uniform posterior tiles coverage counts") {
    Tensor<double> p({19});
    p.fill(1.0 / 19);
    Var<double> G = tile_identity(g.value(p), masks);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j) {
        int count = 0;
        for (int k = 0; k < 19; ++k)
          for (auto [a, b] : masks->entries[k])
            if (a == i && b == j) ++count;
        CHECK(G.val().mat()(i, j) == doctest::Approx(count / 19.0).epsilon(1e-12));
      }
  }

  SUBCASE("row sums against brute force with a random posterior") {
    Rng rng(37);
    Tensor<double> raw = random_tensor(rng, {19}, 0.0, 1.0);
    const double z = raw.vec().sum();
    for (int k = 0; k < 19; ++k) raw[k] /= z;
    Var<double> G = tile_identity(g.value(raw), masks);
    for (int i = 0; i < N; ++i) {
      double want = 0;
      for (int k = 0; k < 19; ++k)
        for (auto [a, b] : masks->entries[k])
          if (a == i) want += raw[k];
      CHECK(G.val().mat().row(i).sum() == doctest::Approx(want).epsilon(1e-12));
      CHECK(G.val().mat().row(i).sum() < 1.0 + 1e-6);
    }
  }
}

TEST_CASE("fusion identities and oracle") {
  Rng rng(38);
  const int N = 4, M = 3, C = 3;
  Graph<double> g;

  SUBCASE("gamma 0 with one-hot rows selects projected visual rows") {
    RowMatrixXd A = RowMatrixXd::Zero(N, M);
    A(0, 1) = A(1, 0) = A(2, 2) = A(3, 1) = 1.0;
    const auto vt = random_tensor(rng, {M, C});
    const auto wo = random_tensor(rng, {C, C});
    Var<double> fused = fuse_visual(g.value(Tensor<double>::from_matrix(A)),
                                    g.value(Tensor<double>(std::vector<int>{N, M})),
                                    g.value(vt), g.value(wo), 0.0);
    const RowMatrixXd proj = vt.mat() * wo.mat();
    CHECK((fused.val().mat().row(0) - proj.row(1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fused.val().mat().row(1) - proj.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fused.val().mat().row(2) - proj.row(2)).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("equal visual rows factor out of the sum") {
    Rng rng2(39);
    RowMatrixXd A(2, M);
    A << 0.2, 0.5, 0.3, 0.6, 0.1, 0.3;  // row-stochastic
    RowMatrixXd G(2, M);
    G << 0.0, 1.0, 0.0, 0.25, 0.25, 0.25;
    RowMatrixXd v(M, C);
    const Eigen::RowVectorXd one_row = random_tensor(rng2, {1, C}).mat().row(0);
    for (int j = 0; j < M; ++j) v.row(j) = one_row;
    const auto wo = random_tensor(rng2, {C, C});
    const double gamma = 0.8;
    Var<double> fused =
        fuse_visual(g.value(Tensor<double>::from_matrix(A)),
                    g.value(Tensor<double>::from_matrix(G)), g.value(Tensor<double>::from_matrix(v)),
                    g.value(wo), gamma);
    const Eigen::RowVectorXd proj = one_row * wo.mat();
    for (int i = 0; i < 2; ++i) {
      const double scale = 1.0 + gamma * G.row(i).sum();
      CHECK((fused.val().mat().row(i) - scale * proj).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("triple-loop oracle on a random case") {
    const auto At = random_tensor(rng, {N, M}, 0.0, 1.0);
    const auto Gt = random_tensor(rng, {N, M}, 0.0, 1.0);
    const auto vt = random_tensor(rng, {M, C});
    const auto wo = random_tensor(rng, {C, C});
    const double gamma = 1.0;
    Var<double> fused = fuse_visual(g.value(At), g.value(Gt), g.value(vt), g.value(wo), gamma);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c) {
        double want = 0;
        for (int j = 0; j < M; ++j) {
          double proj = 0;
          for (int d = 0; d < C; ++d) proj += vt.mat()(j, d) * wo.mat()(d, c);
          want += (At.mat()(i, j) + gamma * Gt.mat()(i, j)) * proj;
        }
        CHECK(fused.val().mat()(i, c) == doctest::Approx(want).epsilon(1e-6));
      }
  }
}

TEST_CASE("fusion is linear in the visual features") {
  Rng rng(40);
  const int N = 5, M = 4, C = 3;
  const auto At = random_tensor(rng, {N, M}, 0.0, 1.0);
  const auto Gt = random_tensor(rng, {N, M}, 0.0, 1.0);
  const auto v1 = random_tensor(rng, {M, C});
  const auto v2 = random_tensor(rng, {M, C});
  const auto wo = random_tensor(rng, {C, C});
  Graph<double> g;
  auto fuse = [&](const Tensor<double>& v) {
    return fuse_visual(g.value(At), g.value(Gt), g.value(v), g.value(wo), 1.0)
        .val()
        .mat()
        .eval();
  };
  Tensor<double> vsum = v1;
  for (long i = 0; i < vsum.size(); ++i) vsum[i] = 2.0 * v1[i] + 3.0 * v2[i];
  const RowMatrixXd lhs = fuse(vsum);
  const RowMatrixXd rhs = 2.0 * fuse(v1) + 3.0 * fuse(v2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("offset estimation tie-breaks toward zero") {
  const int N = 40, M = 20;
  const auto masks = build_diagonal_masks(N, M, 4, 9);
  const RowMatrixXd A = RowMatrixXd::Constant(N, M, 1.0 / M);
  CHECK(estimate_offset(A, masks) == 0);
}

TEST_CASE("affinity gradients flow through the regularization path") {
  Rng rng(41);
  const int N = 8, M = 4, C = 3;
  const auto st = random_tensor(rng, {N, C});
  const auto vt = random_tensor(rng, {M, C});
  const auto ws = random_tensor(rng, {C, C});
  const auto wv = random_tensor(rng, {C, C});
  const auto wo = random_tensor(rng, {C, C});
  auto masks = masks_of(N, M, 2, 3);
  const double err = GradCheck::run(
      [&](Graph<double>& g, std::vector<Var<double>>& v) {
        Var<double> A = compute_affinity(v[0], v[1], v[2], v[3], 0.7);
        Var<double> p = offset_posterior(A, masks, 0.1);
        Var<double> G = tile_identity(p, masks);
        Var<double> fused = fuse_visual(A, G, v[1], v[4], 1.0);
        Rng wrng(77);
        Tensor<double> w(fused.val().shape());
        for (long i = 0; i < w.size(); ++i) w[i] = wrng.uniform(0.5, 1.5);
        return sum_all(mul(fused, g.value(w)));
      },
      {st, vt, ws, wv, wo});
  CHECK(err < 1e-4);
}

TEST_CASE("affinity csv and pgm exports") {
  namespace fs = std::filesystem;
  RowMatrixXd A(2, 3);
  A << 0.1234567, 0.5, 0.25, 1.0, 0.0, 0.75;
  const std::string csv = (fs::temp_directory_path() / "avsep_aff.csv").string();
  const std::string pgm = (fs::temp_directory_path() / "avsep_aff.pgm").string();
  affinity_to_csv(csv, A);
  affinity_to_pgm(pgm, A);

  std::ifstream ci(csv);
  std::string line;
  std::getline(ci, line);
  CHECK(line == "0.123457,0.5,0.25");
  std::getline(ci, line);
  CHECK(line == "1,0,0.75");

  std::ifstream pi(pgm, std::ios::binary);
  std::string header;
  std::getline(pi, header);
  CHECK(header == "P5");
  int w, h, maxv;
  pi >> w >> h >> maxv;
  CHECK(w == 3);  // width = M
  CHECK(h == 2);  // height = N
  CHECK(maxv == 255);
  pi.get();
  unsigned char px[6];
  pi.read(reinterpret_cast<char*>(px), 6);
  CHECK(px[3] == 255);  // matrix max maps to white
  CHECK(px[4] == 0);
  fs::remove(csv);
  fs::remove(pgm);
}
