// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/losses.hpp"
#include "avsep/rng.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

using namespace avsep;
using namespace avsep::test;

TEST_CASE("mag loss identities") {
  Rng rng(70);
  Graph<double> g;
  const auto y = random_tensor(rng, {6, 5}, 0.1, 2.0);
  Var<double> zero = mag_loss(g.value(y), g.value(y));
  CHECK(zero.val()[0] == 0.0);

  // |Yhat| = e |Y| elementwise, away from the floor: each term is -1
  Tensor<double> scaled = y;
  for (long i = 0; i < scaled.size(); ++i) scaled[i] *= M_E;
  Var<double> l = mag_loss(g.value(y), g.value(scaled));
  CHECK(l.val()[0] == doctest::Approx(std::sqrt(30.0)).epsilon(1e-4));

  CHECK_THROWS_AS(mag_loss(g.value(y), g.value(Tensor<double>({3, 2}))),
                  std::invalid_argument);
}

TEST_CASE("mag loss matches a scalar-loop oracle") {
  Rng rng(71);
  Graph<double> g;
  const auto y = random_tensor(rng, {4, 7}, 0.0, 2.0);
  const auto yh = random_tensor(rng, {4, 7}, 0.0, 2.0);
  Var<double> l = mag_loss(g.value(y), g.value(yh));
  double acc = 0;
  for (long i = 0; i < y.size(); ++i) {
    const double d = std::log(y[i] + 1e-7) - std::log(yh[i] + 1e-7);
    acc += d * d;
  }
  CHECK(l.val()[0] == doctest::Approx(std::sqrt(acc)).epsilon(1e-9));
}

TEST_CASE("sisdr loss identities") {
  Rng rng(72);
  Graph<double> g;
  const auto y = random_tensor(rng, {200});
  Var<double> vy = g.value(y);
  CHECK(sisdr_loss(vy, vy).val()[0] == doctest::Approx(-1.0).epsilon(1e-9));

  Tensor<double> neg = y;
  for (long i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
  CHECK(sisdr_loss(vy, g.value(neg)).val()[0] == doctest::Approx(1.0).epsilon(1e-9));

  // orthogonal estimate scores zero
  Tensor<double> orth({200});
  for (int i = 0; i < 200; i += 2) {
    orth[i] = y[i + 1];
    orth[i + 1] = -y[i];
  }
  CHECK(sisdr_loss(vy, g.value(orth)).val()[0] == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(sisdr_loss(vy, g.value(Tensor<double>({7}))), std::invalid_argument);
}

TEST_CASE("sisdr loss is scale invariant for positive scales") {
  Rng rng(73);
  Graph<double> g;
  const auto y = random_tensor(rng, {128});
  const auto yh = random_tensor(rng, {128});
  const double base = sisdr_loss(g.value(y), g.value(yh)).val()[0];
  for (double c : {0.25, 3.0, 117.0}) {
    Tensor<double> scaled = yh;
    for (long i = 0; i < scaled.size(); ++i) scaled[i] *= c;
    CHECK(sisdr_loss(g.value(y), g.value(scaled)).val()[0] ==
          doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("total loss: alpha 0 reduces to the magnitude term") {
  Rng rng(74);
  StftConfig cfg;
  cfg.fft_size = 32;
  cfg.win_len = 24;
  cfg.hop = 8;
  const int frames = 5, bins = cfg.bins();
  Graph<double> g;
  const auto yre = random_tensor(rng, {frames, bins});
  const auto yim = random_tensor(rng, {frames, bins});
  const auto hre = random_tensor(rng, {frames, bins});
  const auto him = random_tensor(rng, {frames, bins});
  const int out_len = (frames - 1) * cfg.hop + cfg.win_len;

  LossConfig lc;
  lc.alpha = 0.0;
  Var<double> total = total_loss_complex(g.value(yre), g.value(yim), g.value(hre), g.value(him),
                                         cfg, out_len, lc);
  Var<double> magonly =
      mag_loss(complex_abs(g.value(yre), g.value(yim)), complex_abs(g.value(hre), g.value(him)));
  CHECK(total.val()[0] == doctest::Approx(magonly.val()[0]).epsilon(1e-12));
}

TEST_CASE("total complex loss at the optimum is exactly -1") {
  Rng rng(75);
  StftConfig cfg;
  const int frames = 8;
  Graph<double> g;
  const auto yre = random_tensor(rng, {frames, cfg.bins()});
  const auto yim = random_tensor(rng, {frames, cfg.bins()});
  const int out_len = (frames - 1) * cfg.hop + cfg.win_len;
  Var<double> l = total_loss_complex(g.value(yre), g.value(yim), g.value(yre), g.value(yim),
                                     cfg, out_len);
  CHECK(l.val()[0] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("loss gradients pass finite differences") {
  Rng rng(76);
  const auto y = random_tensor(rng, {3, 9}, 0.2, 1.5);
  const auto yh = random_tensor(rng, {3, 9}, 0.2, 1.5);
  CHECK(GradCheck::run(
            [](Graph<double>& g, std::vector<Var<double>>& v) {
              return mag_loss(v[0], v[1]);
            },
            {y, yh}) < 1e-4);

  const auto a = random_tensor(rng, {64});
  const auto b = random_tensor(rng, {64});
  CHECK(GradCheck::run(
            [](Graph<double>& g, std::vector<Var<double>>& v) {
              return sisdr_loss(v[0], v[1]);
            },
            {a, b}) < 1e-4);

  StftConfig cfg;
  cfg.fft_size = 32;
  cfg.win_len = 24;
  cfg.hop = 8;
  const int frames = 3, bins = cfg.bins();
  const auto sre = random_tensor(rng, {frames, bins});
  const auto sim = random_tensor(rng, {frames, bins});
  const auto tre = random_tensor(rng, {frames, bins});
  const auto tim = random_tensor(rng, {frames, bins});
  const int out_len = (frames - 1) * cfg.hop + cfg.win_len;
  CHECK(GradCheck::run(
            [cfg, out_len](Graph<double>& g, std::vector<Var<double>>& v) {
              return total_loss_complex(v[0], v[1], v[2], v[3], cfg, out_len);
            },
            {tre, tim, sre, sim}) < 1e-4);
}
