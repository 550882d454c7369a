// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/affinity.hpp"
#include "avsep/ops.hpp"
#include "avsep/rng.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace avsep {

enum class Variant { kReal, kComplex };

inline std::string to_string(Variant v) { return v == Variant::kReal ? "real" : "complex"; }

/// Architecture hyperparameters. Defaults are the desk-scale
/// configuration; the full-scale values (channels 1536, depths 10/5/15,
/// visual dim 512) remain reachable through the same fields.
struct ModelConfig {
  Variant variant = Variant::kReal;
  int audio_bins = 257;
  int visual_in_dim = 32;
  int channels = 64;  // C; the fused visual output C' equals C
  int visual_enc_depth = 4;
  int audio_enc_depth = 3;
  int decoder_depth = 6;
  int nonlocal_blocks = 2;
  int kernel = 5, stride = 1, pad = 2;
  int fa_over_fv = 4;
  int offset_range = 9;
  double tau = 0.1;      // offset posterior softening
  double tau_row = 1.0;  // affinity row softmax temperature
  double gamma = 1.0;    // affinity regularization weight
  double alpha = 1.0;    // SI-SDR weight (complex variant)

  void validate() const {
    if (audio_bins < 1 || visual_in_dim < 1 || channels < 1)
      throw std::invalid_argument("model config: dimensions must be positive");
    if (visual_enc_depth < 2 || audio_enc_depth < 2 || decoder_depth < 2)
      throw std::invalid_argument("model config: depths must be at least 2");
    if (fa_over_fv < 1) throw std::invalid_argument("model config: fa_over_fv must be >= 1");
    if (offset_range < 0) throw std::invalid_argument("model config: offset_range must be >= 0");
    if (tau <= 0 || tau_row <= 0) throw std::invalid_argument("model config: tau must be > 0");
    if (kernel % 2 == 0) throw std::invalid_argument("model config: kernel must be odd");
  }

  std::string to_kv() const;
  static ModelConfig from_kv(const std::string& text);  // unknown keys rejected
};

inline std::string ModelConfig::to_kv() const {
  std::ostringstream o;
  o << "variant=" << to_string(variant) << '\n'
    << "audio_bins=" << audio_bins << '\n'
    << "visual_in_dim=" << visual_in_dim << '\n'
    << "channels=" << channels << '\n'
    << "visual_enc_depth=" << visual_enc_depth << '\n'
    << "audio_enc_depth=" << audio_enc_depth << '\n'
    << "decoder_depth=" << decoder_depth << '\n'
    << "nonlocal_blocks=" << nonlocal_blocks << '\n'
    << "kernel=" << kernel << '\n'
    << "stride=" << stride << '\n'
    << "pad=" << pad << '\n'
    << "fa_over_fv=" << fa_over_fv << '\n'
    << "offset_range=" << offset_range << '\n'
    << "tau=" << tau << '\n'
    << "tau_row=" << tau_row << '\n'
    << "gamma=" << gamma << '\n'
    << "alpha=" << alpha << '\n';
  return o.str();
}

inline ModelConfig ModelConfig::from_kv(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config block: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "variant") {
      if (val == "real")
        c.variant = Variant::kReal;
      else if (val == "complex")
        c.variant = Variant::kComplex;
      else
        throw std::invalid_argument("config block: unknown variant '" + val + "'");
    } else if (key == "audio_bins")
      c.audio_bins = std::stoi(val);
    else if (key == "visual_in_dim")
      c.visual_in_dim = std::stoi(val);
    else if (key == "channels")
      c.channels = std::stoi(val);
    else if (key == "visual_enc_depth")
      c.visual_enc_depth = std::stoi(val);
    else if (key == "audio_enc_depth")
      c.audio_enc_depth = std::stoi(val);
    else if (key == "decoder_depth")
      c.decoder_depth = std::stoi(val);
    else if (key == "nonlocal_blocks")
      c.nonlocal_blocks = std::stoi(val);
    else if (key == "kernel")
      c.kernel = std::stoi(val);
    else if (key == "stride")
      c.stride = std::stoi(val);
    else if (key == "pad")
      c.pad = std::stoi(val);
    else if (key == "fa_over_fv")
      c.fa_over_fv = std::stoi(val);
    else if (key == "offset_range")
      c.offset_range = std::stoi(val);
    else if (key == "tau")
      c.tau = std::stod(val);
    else if (key == "tau_row")
      c.tau_row = std::stod(val);
    else if (key == "gamma")
      c.gamma = std::stod(val);
    else if (key == "alpha")
      c.alpha = std::stod(val);
    else
      throw std::invalid_argument("config block: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

enum class Act { kNone, kRelu, kLRelu, kSigmoid };

template <typename S>
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0xa5a5));
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }

  struct Output {
    // real variant: mask and the masked magnitude; complex variant:
    // cartesian mask and estimated complex spectrogram
    Var<S> mask, yhat_mag;
    Var<S> mask_re, mask_im, yhat_re, yhat_im;
    // diagnostics
    Var<S> affinity, posterior, identity_mat, fused;
    std::shared_ptr<const DiagonalMaskSet> masks;
  };

  /// Real variant: mix_mag is |X| (N x bins), visual is M x visual_in_dim.
  Output forward_real(Graph<S>& g, const Tensor<S>& mix_mag, const Tensor<S>& visual,
                      bool training) {
    if (cfg_.variant != Variant::kReal) throw std::logic_error("model is not the real variant");
    check_inputs(mix_mag.shape(), visual.shape());
    Var<S> x = g.value(mix_mag);
    Var<S> s = run_stack(g, audio_enc_, x, training);
    Var<S> v = run_stack(g, visual_enc_, g.value(visual), training);
    Var<S> s_bar;
    Output out = shared_tail(g, s, v, training, s_bar);
    out.mask = run_stack(g, decoder_, concat_cols(s_bar, out.fused), training);
    out.yhat_mag = mul(out.mask, x);
    return out;
  }

  /// Complex variant: X split into real/imag parts (N x bins each).
  Output forward_complex(Graph<S>& g, const Tensor<S>& x_re, const Tensor<S>& x_im,
                         const Tensor<S>& visual, bool training) {
    if (cfg_.variant != Variant::kComplex)
      throw std::logic_error("model is not the complex variant");
    check_inputs(x_re.shape(), visual.shape());
    detail::require_same_shape(x_re, x_im, "forward_complex");
    CVar<S> x{g.value(x_re), g.value(x_im)};
    CVar<S> s = run_stack_complex(g, audio_enc_c_, x, training);
    Var<S> s_mag = complex_abs(s.re, s.im);
    Var<S> s_phase = atan2v(s.im, s.re);
    Var<S> v = run_stack(g, visual_enc_, g.value(visual), training);

    Var<S> s_bar;
    Output out = shared_tail(g, s_mag, v, training, s_bar);

    // reconstruct a complex feature: |Psi| e^{i theta}, the phase tiled
    // over both concatenated halves (C' = C)
    Var<S> psi_mag = concat_cols(s_bar, out.fused);
    Var<S> phase2 = concat_cols(s_phase, s_phase);
    CVar<S> psi{mul(psi_mag, cosv(phase2)), mul(psi_mag, sinv(phase2))};
    CVar<S> m = run_stack_complex(g, decoder_c_, psi, training);

    // bound |M| by tanh while preserving the mask phase
    Var<S> r = sqrtv(add_const(add(mul(m.re, m.re), mul(m.im, m.im)), S(1e-12)));
    Var<S> scale = divide(tanhv(r), r);
    out.mask_re = mul(m.re, scale);
    out.mask_im = mul(m.im, scale);
    out.yhat_re = sub(mul(out.mask_re, x.re), mul(out.mask_im, x.im));
    out.yhat_im = add(mul(out.mask_re, x.im), mul(out.mask_im, x.re));
    return out;
  }

  void save_checkpoint(const std::string& path);
  static std::pair<ModelConfig, std::map<std::string, Tensor<double>>> read_checkpoint(
      const std::string& path);
  static Model load_checkpoint(const std::string& path);

 private:
  struct ConvLayer {
    Param<S>* w = nullptr;
    Param<S>* b = nullptr;
    Param<S>* bn_gamma = nullptr;
    Param<S>* bn_beta = nullptr;
    Param<S>* bn_mean = nullptr;
    Param<S>* bn_var = nullptr;
    Act act = Act::kNone;
    bool bn = false;
  };
  struct ComplexConvLayer {
    ConvLayer re, im;  // im reuses only w/b; bn params are per part
  };
  struct NonLocalBlock {
    Param<S>* wq;
    Param<S>* wk;
    Param<S>* wv;
    Param<S>* wz;
  };

  void check_inputs(const std::vector<int>& audio_shape, const std::vector<int>& vis_shape) {
    if (audio_shape.size() != 2 || audio_shape[1] != cfg_.audio_bins)
      throw std::invalid_argument("forward: audio input " + shape_str(audio_shape) +
                                  " does not have " + std::to_string(cfg_.audio_bins) + " bins");
    if (vis_shape.size() != 2 || vis_shape[1] != cfg_.visual_in_dim)
      throw std::invalid_argument("forward: visual input " + shape_str(vis_shape) +
                                  " does not have dim " + std::to_string(cfg_.visual_in_dim));
  }

  Tensor<S> conv_init(Rng& rng, int cout, int cin, int k) {
    Tensor<S> w({cout, cin, k});
    const double a = std::sqrt(1.0 / (double(cin) * k));
    for (long i = 0; i < w.size(); ++i) w[i] = S(rng.uniform(-a, a));
    return w;
  }

  Tensor<S> linear_init(Rng& rng, int rows, int cols) {
    Tensor<S> w({rows, cols});
    const double a = std::sqrt(1.0 / rows);
    for (long i = 0; i < w.size(); ++i) w[i] = S(rng.uniform(-a, a));
    return w;
  }

  ConvLayer add_conv(Rng& rng, const std::string& name, int cin, int cout, bool bn, Act act) {
    ConvLayer l;
    l.w = &store_.add(name + ".w", conv_init(rng, cout, cin, cfg_.kernel));
    l.b = &store_.add(name + ".b", Tensor<S>({cout}));
    l.bn = bn;
    l.act = act;
    if (bn) {
      Tensor<S> ones({cout});
      ones.fill(S(1));
      l.bn_gamma = &store_.add(name + ".bn.gamma", ones);
      l.bn_beta = &store_.add(name + ".bn.beta", Tensor<S>({cout}));
      l.bn_mean = &store_.add(name + ".bn.rmean", Tensor<S>({cout}), false);
      Tensor<S> rv({cout});
      rv.fill(S(1));
      l.bn_var = &store_.add(name + ".bn.rvar", rv, false);
    }
    return l;
  }

  ComplexConvLayer add_cconv(Rng& rng, const std::string& name, int cin, int cout, bool bn,
                             Act act) {
    ComplexConvLayer l;
    // magnitude Rayleigh(1/sqrt(Cin K)), phase uniform
    Tensor<S> wr({cout, cin, cfg_.kernel}), wi({cout, cin, cfg_.kernel});
    const double sigma = 1.0 / std::sqrt(double(cin) * cfg_.kernel);
    for (long i = 0; i < wr.size(); ++i) {
      const double m = rng.rayleigh(sigma);
      const double ph = rng.uniform(-M_PI, M_PI);
      wr[i] = S(m * std::cos(ph));
      wi[i] = S(m * std::sin(ph));
    }
    l.re.w = &store_.add(name + ".wr", std::move(wr));
    l.im.w = &store_.add(name + ".wi", std::move(wi));
    l.re.b = &store_.add(name + ".br", Tensor<S>({cout}));
    l.im.b = &store_.add(name + ".bi", Tensor<S>({cout}));
    l.re.bn = l.im.bn = bn;
    l.re.act = l.im.act = act;
    if (bn) {
      for (auto [part, tag] : {std::pair<ConvLayer*, const char*>{&l.re, ".bn_re"},
                               std::pair<ConvLayer*, const char*>{&l.im, ".bn_im"}}) {
        Tensor<S> ones({cout}), rv({cout});
        ones.fill(S(1));
        rv.fill(S(1));
        part->bn_gamma = &store_.add(name + tag + ".gamma", ones);
        part->bn_beta = &store_.add(name + tag + ".beta", Tensor<S>({cout}));
        part->bn_mean = &store_.add(name + tag + ".rmean", Tensor<S>({cout}), false);
        part->bn_var = &store_.add(name + tag + ".rvar", rv, false);
      }
    }
    return l;
  }

  NonLocalBlock add_nonlocal(Rng& rng, const std::string& name) {
    const int c = cfg_.channels;
    NonLocalBlock b;
    b.wq = &store_.add(name + ".wq", linear_init(rng, c, c));
    b.wk = &store_.add(name + ".wk", linear_init(rng, c, c));
    b.wv = &store_.add(name + ".wv", linear_init(rng, c, c));
    // zero output projection: the block starts as the identity
    b.wz = &store_.add(name + ".wz", Tensor<S>({c, c}));
    return b;
  }

  void build(Rng& rng) {
    const int C = cfg_.channels;
    for (int i = 0; i < cfg_.visual_enc_depth; ++i) {
      const bool last = i == cfg_.visual_enc_depth - 1;
      visual_enc_.push_back(add_conv(rng, "venc." + std::to_string(i),
                                     i == 0 ? cfg_.visual_in_dim : C, C, !last,
                                     last ? Act::kNone : Act::kRelu));
    }
    if (cfg_.variant == Variant::kReal) {
      for (int i = 0; i < cfg_.audio_enc_depth; ++i) {
        const bool last = i == cfg_.audio_enc_depth - 1;
        audio_enc_.push_back(add_conv(rng, "aenc." + std::to_string(i),
                                      i == 0 ? cfg_.audio_bins : C, C, !last,
                                      last ? Act::kNone : Act::kRelu));
      }
      for (int i = 0; i < cfg_.decoder_depth; ++i) {
        const bool last = i == cfg_.decoder_depth - 1;
        decoder_.push_back(add_conv(rng, "dec." + std::to_string(i), i == 0 ? 2 * C : C,
                                    last ? cfg_.audio_bins : C, true,
                                    last ? Act::kSigmoid : Act::kRelu));
      }
    } else {
      for (int i = 0; i < cfg_.audio_enc_depth; ++i) {
        const bool last = i == cfg_.audio_enc_depth - 1;
        audio_enc_c_.push_back(add_cconv(rng, "aenc." + std::to_string(i),
                                         i == 0 ? cfg_.audio_bins : C, C, !last,
                                         last ? Act::kNone : Act::kLRelu));
      }
      for (int i = 0; i < cfg_.decoder_depth; ++i) {
        const bool last = i == cfg_.decoder_depth - 1;
        decoder_c_.push_back(add_cconv(rng, "dec." + std::to_string(i), i == 0 ? 2 * C : C,
                                       last ? cfg_.audio_bins : C, !last,
                                       last ? Act::kNone : Act::kLRelu));
      }
    }
    for (int i = 0; i < cfg_.nonlocal_blocks; ++i) {
      a_nonlocal_.push_back(add_nonlocal(rng, "anl." + std::to_string(i)));
      v_nonlocal_.push_back(add_nonlocal(rng, "vnl." + std::to_string(i)));
    }
    aff_ws_ = &store_.add("affinity.ws", linear_init(rng, C, C));
    aff_wv_ = &store_.add("affinity.wv", linear_init(rng, C, C));
    aff_wo_ = &store_.add("affinity.wo", linear_init(rng, C, C));
  }

  Var<S> apply_act(Var<S> x, Act act) {
    switch (act) {
      case Act::kRelu:
        return relu(x);
      case Act::kLRelu:
        return leaky_relu(x, S(0.2));
      case Act::kSigmoid:
        return sigmoid(x);
      case Act::kNone:
        return x;
    }
    return x;
  }

  Var<S> run_layer(Graph<S>& g, const ConvLayer& l, Var<S> x, bool training) {
    Var<S> y = conv1d(x, g.param(*l.w), g.param(*l.b), cfg_.stride, cfg_.pad);
    if (l.bn)
      y = batchnorm1d(y, g.param(*l.bn_gamma), g.param(*l.bn_beta), l.bn_mean->value,
                      l.bn_var->value, training);
    return apply_act(y, l.act);
  }

  Var<S> run_stack(Graph<S>& g, const std::vector<ConvLayer>& stack, Var<S> x, bool training) {
    for (const auto& l : stack) x = run_layer(g, l, x, training);
    return x;
  }

  CVar<S> run_stack_complex(Graph<S>& g, const std::vector<ComplexConvLayer>& stack, CVar<S> x,
                            bool training) {
    for (const auto& l : stack) {
      CVar<S> w{g.param(*l.re.w), g.param(*l.im.w)};
      CVar<S> b{g.param(*l.re.b), g.param(*l.im.b)};
      x = complex_conv1d(x, w, b, cfg_.stride, cfg_.pad);
      if (l.re.bn) {
        x.re = batchnorm1d(x.re, g.param(*l.re.bn_gamma), g.param(*l.re.bn_beta),
                           l.re.bn_mean->value, l.re.bn_var->value, training);
        x.im = batchnorm1d(x.im, g.param(*l.im.bn_gamma), g.param(*l.im.bn_beta),
                           l.im.bn_mean->value, l.im.bn_var->value, training);
      }
      x.re = apply_act(x.re, l.re.act);
      x.im = apply_act(x.im, l.im.act);
    }
    return x;
  }

  Var<S> run_nonlocal(Graph<S>& g, const NonLocalBlock& b, Var<S> x) {
    const S inv_sqrt_c = S(1.0 / std::sqrt(double(cfg_.channels)));
    Var<S> q = matmul(x, g.param(*b.wq));
    Var<S> k = matmul(x, g.param(*b.wk));
    Var<S> v = matmul(x, g.param(*b.wv));
    Var<S> attn = row_softmax(mul_const(matmul(q, k, false, true), inv_sqrt_c));
    return add(x, matmul(matmul(attn, v), g.param(*b.wz)));
  }

  /// Non-local refiners, affinity, regularization, and fusion; shared by
  /// both variants. The refined audio feature is handed back to the caller.
  Output shared_tail(Graph<S>& g, Var<S> s, Var<S> v, bool /*training*/, Var<S>& s_bar_out) {
    for (const auto& b : a_nonlocal_) s = run_nonlocal(g, b, s);
    for (const auto& b : v_nonlocal_) v = run_nonlocal(g, b, v);
    s_bar_out = s;

    const int n = s.val().rows(), m = v.val().rows();
    Output out;
    out.masks = std::make_shared<const DiagonalMaskSet>(
        build_diagonal_masks(n, m, cfg_.fa_over_fv, cfg_.offset_range));
    out.affinity =
        compute_affinity(s, v, g.param(*aff_ws_), g.param(*aff_wv_), S(cfg_.tau_row));
    out.posterior = offset_posterior(out.affinity, out.masks, S(cfg_.tau));
    out.identity_mat = tile_identity(out.posterior, out.masks);
    out.fused =
        fuse_visual(out.affinity, out.identity_mat, v, g.param(*aff_wo_), S(cfg_.gamma));
    return out;
  }

  ModelConfig cfg_;
  ParamStore<S> store_;
  std::vector<ConvLayer> visual_enc_, audio_enc_, decoder_;
  std::vector<ComplexConvLayer> audio_enc_c_, decoder_c_;
  std::vector<NonLocalBlock> a_nonlocal_, v_nonlocal_;
  Param<S>* aff_ws_ = nullptr;
  Param<S>* aff_wv_ = nullptr;
  Param<S>* aff_wo_ = nullptr;
};

// ---------------------------------------------------------------------------
// Checkpoint format: magic "CKPT", version u32, length-prefixed UTF-8
// key=value config block, then per-parameter records of
//   name_len u32, name bytes, dtype u8 (0 = f32, 1 = f64),
//   rank u32, dims u32 each, raw little-endian values.

namespace detail {

inline void write_u32(std::ostream& o, uint32_t v) {
  char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24 & 0xff)};
  o.write(b, 4);
}

inline uint32_t read_u32_b(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace detail

template <typename S>
void Model<S>::save_checkpoint(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write("CKPT", 4);
  detail::write_u32(out, 1);
  const std::string kv = cfg_.to_kv();
  detail::write_u32(out, uint32_t(kv.size()));
  out.write(kv.data(), std::streamsize(kv.size()));
  for (auto* p : store_.all()) {
    detail::write_u32(out, uint32_t(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    out.put(sizeof(S) == 4 ? char(0) : char(1));
    detail::write_u32(out, uint32_t(p->value.rank()));
    for (int d : p->value.shape()) detail::write_u32(out, uint32_t(d));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              std::streamsize(p->value.size() * sizeof(S)));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

template <typename S>
std::pair<ModelConfig, std::map<std::string, Tensor<double>>> Model<S>::read_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open checkpoint");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "CKPT")
    throw std::runtime_error(path + ": bad magic (want CKPT)");
  const uint32_t version = detail::read_u32_b(in);
  if (version != 1)
    throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
  const uint32_t kv_len = detail::read_u32_b(in);
  std::string kv(kv_len, '\0');
  in.read(kv.data(), kv_len);
  if (!in) throw std::runtime_error(path + ": truncated config block");
  ModelConfig cfg = ModelConfig::from_kv(kv);

  std::map<std::string, Tensor<double>> tensors;
  while (true) {
    const uint32_t name_len = detail::read_u32_b(in);
    if (in.eof() || !in) break;
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int dtype = in.get();
    const uint32_t rank = detail::read_u32_b(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = int(detail::read_u32_b(in));
    Tensor<double> t(shape);
    if (dtype == 0) {
      std::vector<float> buf(t.size());
      in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
      for (long i = 0; i < t.size(); ++i) t[i] = buf[i];
    } else if (dtype == 1) {
      in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * 8));
    } else {
      throw std::runtime_error(path + ": unknown dtype tag " + std::to_string(dtype));
    }
    if (!in) throw std::runtime_error(path + ": truncated parameter " + name);
    tensors.emplace(std::move(name), std::move(t));
  }
  return {cfg, std::move(tensors)};
}

template <typename S>
Model<S> Model<S>::load_checkpoint(const std::string& path) {
  auto [cfg, tensors] = read_checkpoint(path);
  Model<S> m(cfg, 0);
  size_t used = 0;
  for (auto* p : m.store_.all()) {
    auto it = tensors.find(p->name);
    if (it == tensors.end())
      throw std::runtime_error(path + ": missing parameter " + p->name);
    if (it->second.shape() != p->value.shape())
      throw std::runtime_error(path + ": parameter " + p->name + " has shape " +
                               shape_str(it->second.shape()) + ", model expects " +
                               shape_str(p->value.shape()));
    for (long i = 0; i < p->value.size(); ++i) p->value[i] = S(it->second[i]);
    ++used;
  }
  if (used != tensors.size())
    throw std::runtime_error(path + ": checkpoint holds " + std::to_string(tensors.size()) +
                             " tensors, model expects " + std::to_string(used));
  return m;
}

/// Elementwise complex mask application: Yhat = M (*) X.
template <typename S>
CVar<S> apply_complex_mask(CVar<S> m, CVar<S> x) {
  return {sub(mul(m.re, x.re), mul(m.im, x.im)), add(mul(m.re, x.im), mul(m.im, x.re))};
}

}  // namespace avsep
