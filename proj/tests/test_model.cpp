// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/model.hpp"
#include "avsep/pipeline.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <filesystem>

using namespace avsep;
using namespace avsep::test;

namespace {

ModelConfig tiny_config(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.audio_bins = 9;
  cfg.visual_in_dim = 3;
  cfg.channels = 4;
  cfg.visual_enc_depth = 2;
  cfg.audio_enc_depth = 2;
  cfg.decoder_depth = 2;
  return cfg;
}

}  // namespace

TEST_CASE("conv stacks preserve the temporal length") {
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<double> m(cfg, 3);
  Graph<double> g;
  Rng rng(50);
  const auto mag = random_tensor(rng, {20, cfg.audio_bins}, 0.0, 1.0);
  const auto vis = random_tensor(rng, {20, cfg.visual_in_dim});
  const auto out = m.forward_real(g, mag, vis, false);
  CHECK(out.yhat_mag.val().rows() == 20);
  CHECK(out.yhat_mag.val().cols() == cfg.audio_bins);
  CHECK(out.affinity.val().rows() == 20);
  CHECK(out.affinity.val().cols() == 20);
}

TEST_CASE("forward shape contract at desk scale") {
  ModelConfig cfg;
  cfg.channels = 8;  // small channels; the shape contract is what matters
  cfg.visual_in_dim = 32;
  Model<float> m(cfg, 1);
  Graph<float> g;
  Rng rng(51);
  const auto mag = random_tensor(rng, {198, 257}, 0.0, 1.0).cast<float>();
  const auto vis = random_tensor(rng, {46, 32}).cast<float>();
  const auto out = m.forward_real(g, mag, vis, false);
  CHECK(out.yhat_mag.val().rows() == 198);
  CHECK(out.yhat_mag.val().cols() == 257);
  CHECK(out.affinity.val().rows() == 198);
  CHECK(out.affinity.val().cols() == 46);
  CHECK(out.posterior.val().size() == 19);
}

TEST_CASE("real mask stays in (0,1) and an all-ones mask is the identity") {
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<double> m(cfg, 4);
  Graph<double> g;
  Rng rng(52);
  const auto mag = random_tensor(rng, {12, cfg.audio_bins}, 0.0, 2.0);
  const auto vis = random_tensor(rng, {10, cfg.visual_in_dim});
  const auto out = m.forward_real(g, mag, vis, true);
  for (long i = 0; i < out.mask.val().size(); ++i) {
    CHECK(out.mask.val()[i] > 0.0);
    CHECK(out.mask.val()[i] < 1.0);
  }
  // masked output with a forced all-ones mask reproduces the magnitude
  Var<double> ones = g.value([&] {
    Tensor<double> t({12, cfg.audio_bins});
    t.fill(1.0);
    return t;
  }());
  Var<double> forced = mul(ones, g.value(mag));
  for (long i = 0; i < forced.val().size(); ++i) CHECK(forced.val()[i] == mag[i]);
}

TEST_CASE("zero-initialized output projection leaves non-local blocks as identity") {
  // all nonlocal projections zeroed: block output equals its input
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<double> m(cfg, 5);
  for (auto* p : m.params().all())
    if (p->name.find("nl.") != std::string::npos) p->value.zero();
  // encoder output feeds the blocks; with wz = 0 the residual path is exact.
  // Compare a forward pass against one with nonlocal blocks removed by
  // checking that attention contributes nothing: run twice with different
  // wq/wk/wv but wz = 0.
  Graph<double> g;
  Rng rng(53);
  const auto mag = random_tensor(rng, {10, cfg.audio_bins}, 0.0, 1.0);
  const auto vis = random_tensor(rng, {8, cfg.visual_in_dim});
  const auto out1 = m.forward_real(g, mag, vis, false);
  for (auto* p : m.params().all())
    if (p->name.find("nl.") != std::string::npos && p->name.find(".wz") == std::string::npos)
      for (long i = 0; i < p->value.size(); ++i) p->value[i] = rng.uniform(-1, 1);
  Graph<double> g2;
  const auto out2 = m.forward_real(g2, mag, vis, false);
  CHECK((out1.yhat_mag.val().mat() - out2.yhat_mag.val().mat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-row attention weight is exactly one") {
  Rng rng(54);
  Graph<double> g;
  const auto x = random_tensor(rng, {1, 4});
  Var<double> attn = row_softmax(
      mul_const(matmul(g.value(x), g.value(random_tensor(rng, {1, 4})), false, true), 0.5));
  CHECK(attn.val().size() == 1);
  CHECK(attn.val()[0] == 1.0);
}

TEST_CASE("complex encoder with real weights keeps binary phase") {
  // a complex conv whose imaginary weights are zero maps a real input to
  // a real activation; decompose then yields phase in {0, pi}
  Rng rng(55);
  Graph<double> g;
  const auto hr = random_tensor(rng, {7, 2});
  Tensor<double> hi({7, 2});
  const auto wr = random_tensor(rng, {3, 2, 5});
  Tensor<double> wi({3, 2, 5});
  Tensor<double> br({3}), bi({3});
  CVar<double> y = complex_conv1d(CVar<double>{g.value(hr), g.value(hi)},
                                  CVar<double>{g.value(wr), g.value(wi)},
                                  CVar<double>{g.value(br), g.value(bi)}, 1, 2);
  Var<double> phase = atan2v(y.im, y.re);
  for (long i = 0; i < phase.val().size(); ++i) {
    const double p = phase.val()[i];
    CHECK((p == 0.0 || p == doctest::Approx(M_PI) || p == doctest::Approx(-M_PI)));
  }
  // single tap 1 + 0i: magnitude/phase equal decompose of the input
  Tensor<double> one({2, 2, 1});
  one[0 * 2 + 0] = 1.0;
  one[1 * 2 + 1] = 1.0;
  Tensor<double> zero({2, 2, 1}), zb({2});
  CVar<double> ident = complex_conv1d(CVar<double>{g.value(hr), g.value(hi)},
                                      CVar<double>{g.value(one), g.value(zero)},
                                      CVar<double>{g.value(zb), g.value(zb)}, 1, 0);
  Var<double> mag = complex_abs(ident.re, ident.im);
  for (long i = 0; i < mag.val().size(); ++i)
    CHECK(mag.val()[i] == doctest::Approx(std::abs(hr[i])));
}

TEST_CASE("complex mask magnitude is bounded by one") {
  ModelConfig cfg = tiny_config(Variant::kComplex);
  Model<double> m(cfg, 6);
  Graph<double> g;
  Rng rng(56);
  const auto xre = random_tensor(rng, {10, cfg.audio_bins});
  const auto xim = random_tensor(rng, {10, cfg.audio_bins});
  const auto vis = random_tensor(rng, {8, cfg.visual_in_dim});
  const auto out = m.forward_complex(g, xre, xim, vis, true);
  for (long i = 0; i < out.mask_re.val().size(); ++i) {
    const double mag = std::hypot(out.mask_re.val()[i], out.mask_im.val()[i]);
    CHECK(mag <= 1.0);
  }
}

TEST_CASE("zeroed final decoder weights give a zero complex mask") {
  ModelConfig cfg = tiny_config(Variant::kComplex);
  Model<double> m(cfg, 7);
  const std::string last = "dec." + std::to_string(cfg.decoder_depth - 1);
  for (auto* p : m.params().all())
    if (p->name.rfind(last, 0) == 0) p->value.zero();
  Graph<double> g;
  Rng rng(57);
  const auto xre = random_tensor(rng, {10, cfg.audio_bins});
  const auto xim = random_tensor(rng, {10, cfg.audio_bins});
  const auto vis = random_tensor(rng, {8, cfg.visual_in_dim});
  const auto out = m.forward_complex(g, xre, xim, vis, false);
  for (long i = 0; i < out.yhat_re.val().size(); ++i) {
    CHECK(out.yhat_re.val()[i] == 0.0);
    CHECK(out.yhat_im.val()[i] == 0.0);
  }
}

TEST_CASE("apply_complex_mask identities and dual-route agreement") {
  Rng rng(58);
  Graph<double> g;
  const auto xre = random_tensor(rng, {6, 5});
  const auto xim = random_tensor(rng, {6, 5});
  CVar<double> x{g.value(xre), g.value(xim)};

  SUBCASE("unit mask is the identity") {
    Tensor<double> one({6, 5});
    one.fill(1.0);
    CVar<double> y = apply_complex_mask({g.value(one), g.value(Tensor<double>({6, 5}))}, x);
    for (long i = 0; i < y.re.val().size(); ++i) {
      CHECK(y.re.val()[i] == xre[i]);
      CHECK(y.im.val()[i] == xim[i]);
    }
  }
  SUBCASE("mask = i rotates the phase by 90 degrees") {
    Tensor<double> one({6, 5});
    one.fill(1.0);
    CVar<double> y = apply_complex_mask({g.value(Tensor<double>({6, 5})), g.value(one)}, x);
    for (long i = 0; i < y.re.val().size(); ++i) {
      CHECK(std::hypot(y.re.val()[i], y.im.val()[i]) ==
            doctest::Approx(std::hypot(xre[i], xim[i])).epsilon(1e-12));
      CHECK(y.re.val()[i] == doctest::Approx(-xim[i]));
      CHECK(y.im.val()[i] == doctest::Approx(xre[i]));
    }
  }
  SUBCASE("zero mask kills the spectrogram") {
    CVar<double> y = apply_complex_mask(
        {g.value(Tensor<double>({6, 5})), g.value(Tensor<double>({6, 5}))}, x);
    for (long i = 0; i < y.re.val().size(); ++i) {
      CHECK(y.re.val()[i] == 0.0);
      CHECK(y.im.val()[i] == 0.0);
    }
  }
  SUBCASE("cartesian product agrees with the polar form") {
    const auto mre = random_tensor(rng, {6, 5});
    const auto mim = random_tensor(rng, {6, 5});
    CVar<double> y = apply_complex_mask({g.value(mre), g.value(mim)}, x);
    for (long i = 0; i < y.re.val().size(); ++i) {
      const std::complex<double> mc = {mre[i], mim[i]}, xc = {xre[i], xim[i]};
      const std::complex<double> polar =
          std::polar(std::abs(mc) * std::abs(xc), std::arg(mc) + std::arg(xc));
      CHECK(std::abs(polar.real() - y.re.val()[i]) < 1e-12);
      CHECK(std::abs(polar.imag() - y.im.val()[i]) < 1e-12);
    }
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<double> m(cfg, 8);
  Rng rng(59);
  const auto mag = random_tensor(rng, {12, cfg.audio_bins}, 0.0, 1.0);
  const auto vis = random_tensor(rng, {9, cfg.visual_in_dim});
  Graph<double> g1, g2;
  const auto a = m.forward_real(g1, mag, vis, false);
  const auto b = m.forward_real(g2, mag, vis, false);
  for (long i = 0; i < a.yhat_mag.val().size(); ++i)
    CHECK(a.yhat_mag.val()[i] == b.yhat_mag.val()[i]);
}

TEST_CASE("checkpoint round trip preserves evaluation exactly") {
  namespace fs = std::filesystem;
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<float> m(cfg, 9);
  // move running stats off their defaults
  Graph<float> warm;
  Rng rng(60);
  const auto mag = random_tensor(rng, {12, cfg.audio_bins}, 0.0, 1.0).cast<float>();
  const auto vis = random_tensor(rng, {9, cfg.visual_in_dim}).cast<float>();
  m.forward_real(warm, mag, vis, true);

  const std::string path = (fs::temp_directory_path() / "avsep_test.ckpt").string();
  m.save_checkpoint(path);
  Model<float> loaded = Model<float>::load_checkpoint(path);
  CHECK(loaded.config().channels == cfg.channels);

  Graph<float> g1, g2;
  const auto a = m.forward_real(g1, mag, vis, false);
  const auto b = loaded.forward_real(g2, mag, vis, false);
  for (long i = 0; i < a.yhat_mag.val().size(); ++i)
    CHECK(a.yhat_mag.val()[i] == b.yhat_mag.val()[i]);
  fs::remove(path);
}

TEST_CASE("checkpoint loader rejects bad files") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "avsep_bad.ckpt").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE----";
  }
  CHECK_THROWS_WITH_AS(Model<float>::load_checkpoint(path), doctest::Contains("magic"),
                       std::runtime_error);
  fs::remove(path);
}

TEST_CASE("model config kv round trip and unknown-key rejection") {
  ModelConfig cfg = tiny_config(Variant::kComplex);
  cfg.gamma = 0.25;
  const ModelConfig back = ModelConfig::from_kv(cfg.to_kv());
  CHECK(back.variant == Variant::kComplex);
  CHECK(back.gamma == doctest::Approx(0.25));
  CHECK(back.audio_bins == cfg.audio_bins);
  CHECK_THROWS_WITH_AS(ModelConfig::from_kv("bogus_key=1\n"), doctest::Contains("unknown key"),
                       std::invalid_argument);
  ModelConfig bad = cfg;
  bad.decoder_depth = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("end-to-end gradients of the real variant on a tiny model") {
  ModelConfig cfg = tiny_config(Variant::kReal);
  Model<double> m(cfg, 10);
  Rng rng(61);
  const auto mag = random_tensor(rng, {8, cfg.audio_bins}, 0.1, 1.0);
  const auto ymag = random_tensor(rng, {8, cfg.audio_bins}, 0.1, 1.0);
  const auto vis = random_tensor(rng, {6, cfg.visual_in_dim});

  auto loss_value = [&]() {
    Graph<double> g;
    auto out = m.forward_real(g, mag, vis, true);
    return total_loss_real(g.value(ymag), out.yhat_mag).val()[0];
  };

  Graph<double> g;
  auto out = m.forward_real(g, mag, vis, true);
  Var<double> loss = total_loss_real(g.value(ymag), out.yhat_mag);
  m.params().zero_grad();
  g.backward(loss);

  const double h = 1e-5;
  double worst = 0;
  for (auto* p : m.params().trainable()) {
    Rng pick(mix_seed(62, std::hash<std::string>{}(p->name)));
    // a handful of coordinates per parameter keeps this test quick; the
    // acceptance suite sweeps every coordinate
    const int probes = int(std::min<long>(4, p->value.size()));
    for (int t = 0; t < probes; ++t) {
      const long i = long(pick.below(uint64_t(p->value.size())));
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss_value();
      p->value[i] = keep - h;
      const double dn = loss_value();
      p->value[i] = keep;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  CHECK(worst < 1e-3);
}
