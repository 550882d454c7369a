// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/dsp.hpp"
#include "avsep/graph.hpp"

#include <cmath>
#include <memory>

namespace avsep {

// ---------------------------------------------------------------------------
// Elementwise binaries (equal shapes).

namespace detail {

template <typename S, typename FwdFn, typename BwdFn>
Var<S> elementwise_binary(Var<S> a, Var<S> b, const char* name, FwdFn fwd, BwdFn bwd) {
  Graph<S>& g = same_graph(a, b);
  const Tensor<S>& av = a.val();
  const Tensor<S>& bv = b.val();
  require_same_shape(av, bv, name);
  Tensor<S> out(av.shape());
  for (long i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool rg = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a, b, bwd]() {
      Tensor<S>& go = g.grad(id);
      const Tensor<S>& av = a.val();
      const Tensor<S>& bv = b.val();
      const bool ga = a.requires_grad(), gb = b.requires_grad();
      Tensor<S>* da = ga ? &g.grad_acc(a.id) : nullptr;
      Tensor<S>* db = gb ? &g.grad_acc(b.id) : nullptr;
      for (long i = 0; i < go.size(); ++i) {
        S dx, dy;
        bwd(av[i], bv[i], go[i], dx, dy);
        if (da) (*da)[i] += dx;
        if (db) (*db)[i] += dy;
      }
    });
  }
  return {&g, id};
}

template <typename S, typename FwdFn, typename BwdFn>
Var<S> elementwise_unary(Var<S> a, FwdFn fwd, BwdFn bwd) {
  Graph<S>& g = *a.g;
  const Tensor<S>& av = a.val();
  Tensor<S> out(av.shape());
  for (long i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const bool rg = a.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a, bwd]() {
      Tensor<S>& go = g.grad(id);
      Tensor<S>& da = g.grad_acc(a.id);
      const Tensor<S>& av = a.val();
      const Tensor<S>& ov = g.val(id);
      for (long i = 0; i < go.size(); ++i) da[i] += go[i] * bwd(av[i], ov[i]);
    });
  }
  return {&g, id};
}

}  // namespace detail

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  return detail::elementwise_binary(
      a, b, "add", [](S x, S y) { return x + y; },
      [](S, S, S go, S& dx, S& dy) { dx = go, dy = go; });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  return detail::elementwise_binary(
      a, b, "sub", [](S x, S y) { return x - y; },
      [](S, S, S go, S& dx, S& dy) { dx = go, dy = -go; });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  return detail::elementwise_binary(
      a, b, "mul", [](S x, S y) { return x * y; },
      [](S x, S y, S go, S& dx, S& dy) { dx = go * y, dy = go * x; });
}

template <typename S>
Var<S> divide(Var<S> a, Var<S> b) {
  return detail::elementwise_binary(
      a, b, "divide", [](S x, S y) { return x / y; },
      [](S x, S y, S go, S& dx, S& dy) {
        dx = go / y;
        dy = -go * x / (y * y);
      });
}

template <typename S>
Var<S> atan2v(Var<S> y, Var<S> x) {
  return detail::elementwise_binary(
      y, x, "atan2",
      [](S yy, S xx) { return (yy == S(0) && xx == S(0)) ? S(0) : std::atan2(yy, xx); },
      [](S yy, S xx, S go, S& dy, S& dx) {
        const S d = std::max(yy * yy + xx * xx, S(1e-30));
        dy = go * xx / d;
        dx = -go * yy / d;
      });
}

/// Elementwise sqrt(re^2 + im^2); gradient is 0 at the origin.
template <typename S>
Var<S> complex_abs(Var<S> re, Var<S> im) {
  return detail::elementwise_binary(
      re, im, "complex_abs", [](S r, S i) { return std::sqrt(r * r + i * i); },
      [](S r, S i, S go, S& dr, S& di) {
        const S m = std::sqrt(r * r + i * i);
        if (m > S(0)) {
          dr = go * r / m;
          di = go * i / m;
        } else {
          dr = di = S(0);
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise unaries and scalar arithmetic.

template <typename S>
Var<S> add_const(Var<S> a, S c) {
  return detail::elementwise_unary(
      a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

template <typename S>
Var<S> mul_const(Var<S> a, S c) {
  return detail::elementwise_unary(
      a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}

template <typename S>
Var<S> relu(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, S slope = S(0.2)) {
  return detail::elementwise_unary(
      a, [slope](S x) { return x > S(0) ? x : slope * x; },
      [slope](S x, S) { return x > S(0) ? S(1) : slope; });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> tanhv(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> logv(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Var<S> sqrtv(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return std::sqrt(x); },
      [](S, S y) { return S(1) / (S(2) * y); });
}

template <typename S>
Var<S> sinv(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return std::sin(x); }, [](S x, S) { return std::cos(x); });
}

template <typename S>
Var<S> cosv(Var<S> a) {
  return detail::elementwise_unary(
      a, [](S x) { return std::cos(x); }, [](S x, S) { return -std::sin(x); });
}

// ---------------------------------------------------------------------------
// Reductions and shape plumbing.

template <typename S>
Var<S> sum_all(Var<S> a) {
  Graph<S>& g = *a.g;
  Tensor<S> out = Tensor<S>::scalar(a.val().vec().sum());
  const bool rg = a.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a]() {
      g.grad_acc(a.id).vec().array() += g.grad(id)[0];
    });
  }
  return {&g, id};
}

/// Broadcast-add a length-C vector to every row of an N x C matrix.
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> b) {
  Graph<S>& g = detail::same_graph(a, b);
  const Tensor<S>& av = a.val();
  const Tensor<S>& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 1 || av.cols() != bv.dim(0))
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(av.shape()) +
                                " vs " + shape_str(bv.shape()));
  Tensor<S> out(av.shape());
  out.mat() = av.mat().rowwise() + bv.vec().transpose();
  const bool rg = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a, b]() {
      Tensor<S>& go = g.grad(id);
      if (a.requires_grad()) g.grad_acc(a.id).vec() += go.vec();
      if (b.requires_grad())
        g.grad_acc(b.id).vec() += go.mat().colwise().sum().transpose();
    });
  }
  return {&g, id};
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  Graph<S>& g = detail::same_graph(a, b);
  const Tensor<S>& av = a.val();
  const Tensor<S>& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
    throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(av.shape()) +
                                " vs " + shape_str(bv.shape()));
  const int n = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor<S> out({n, ca + cb});
  out.mat().leftCols(ca) = av.mat();
  out.mat().rightCols(cb) = bv.mat();
  const bool rg = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a, b, ca, cb]() {
      auto go = g.grad(id).mat();
      if (a.requires_grad()) g.grad_acc(a.id).mat() += go.leftCols(ca);
      if (b.requires_grad()) g.grad_acc(b.id).mat() += go.rightCols(cb);
    });
  }
  return {&g, id};
}

// ---------------------------------------------------------------------------
// Matrix product.

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b, bool trans_a = false, bool trans_b = false) {
  Graph<S>& g = detail::same_graph(a, b);
  const Tensor<S>& av = a.val();
  const Tensor<S>& bv = b.val();
  if (av.rank() != 2 || bv.rank() != 2)
    throw std::invalid_argument("matmul: operands must be rank-2");
  const int m = trans_a ? av.cols() : av.rows();
  const int ka = trans_a ? av.rows() : av.cols();
  const int kb = trans_b ? bv.cols() : bv.rows();
  const int n = trans_b ? bv.rows() : bv.cols();
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(av.shape()) +
                                " vs " + shape_str(bv.shape()));
  Tensor<S> out({m, n});
  {
    auto A = av.mat();
    auto B = bv.mat();
    if (!trans_a && !trans_b)
      out.mat().noalias() = A * B;
    else if (trans_a && !trans_b)
      out.mat().noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      out.mat().noalias() = A * B.transpose();
    else
      out.mat().noalias() = A.transpose() * B.transpose();
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, a, b, trans_a, trans_b]() {
      auto G = g.grad(id).mat();
      auto A = a.val().mat();
      auto B = b.val().mat();
      if (a.requires_grad()) {
        auto dA = g.grad_acc(a.id).mat();
        if (!trans_a && !trans_b)
          dA.noalias() += G * B.transpose();
        else if (trans_a && !trans_b)
          dA.noalias() += B * G.transpose();
        else if (!trans_a && trans_b)
          dA.noalias() += G * B;
        else
          dA.noalias() += B.transpose() * G.transpose();
      }
      if (b.requires_grad()) {
        auto dB = g.grad_acc(b.id).mat();
        if (!trans_a && !trans_b)
          dB.noalias() += A.transpose() * G;
        else if (trans_a && !trans_b)
          dB.noalias() += A * G;
        else if (!trans_a && trans_b)
          dB.noalias() += G.transpose() * A;
        else
          dB.noalias() += G.transpose() * A.transpose();
      }
    });
  }
  return {&g, id};
}

// ---------------------------------------------------------------------------
// 1-D convolution over time (rows), x: T x Cin, w: Cout x Cin x K.
// Output T' x Cout with T' = (T + 2 pad - K) / stride + 1, zero padding.

template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, int stride = 1, int pad = 0) {
  Graph<S>& g = detail::same_graph(x, w);
  const Tensor<S>& xv = x.val();
  const Tensor<S>& wv = w.val();
  if (xv.rank() != 2 || wv.rank() != 3)
    throw std::invalid_argument("conv1d: want input T x Cin and weight Cout x Cin x K, got " +
                                shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
  const int T = xv.dim(0), cin = xv.dim(1);
  const int cout = wv.dim(0), wcin = wv.dim(1), K = wv.dim(2);
  if (wcin != cin)
    throw std::invalid_argument("conv1d: channel mismatch, input " + shape_str(xv.shape()) +
                                " vs weight " + shape_str(wv.shape()));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv1d: bad stride/pad");
  const int To = (T + 2 * pad - K) / stride + 1;
  if (To < 1) throw std::invalid_argument("conv1d: input too short for kernel");

  // im2col + GEMM; the unfolded matrix is cached for the backward pass.
  auto cols = std::make_shared<Tensor<S>>(std::vector<int>{To, cin * K});
  {
    auto C = cols->mat();
    C.setZero();
    for (int t = 0; t < To; ++t) {
      const int base = t * stride - pad;
      for (int k = 0; k < K; ++k) {
        const int src = base + k;
        if (src < 0 || src >= T) continue;
        for (int c = 0; c < cin; ++c) C(t, c * K + k) = xv.mat()(src, c);
      }
    }
  }
  Tensor<S> wm({cin * K, cout});
  for (int o = 0; o < cout; ++o)
    for (int c = 0; c < cin; ++c)
      for (int k = 0; k < K; ++k) wm[(long(c) * K + k) * cout + o] = wv[(long(o) * cin + c) * K + k];

  Tensor<S> out({To, cout});
  out.mat().noalias() = cols->mat() * wm.mat();

  const bool rg = x.requires_grad() || w.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    auto wm_cache = std::make_shared<Tensor<S>>(std::move(wm));
    g.set_backward(id, [&g, id, x, w, cols, wm_cache, T, cin, cout, K, To, stride, pad]() {
      auto G = g.grad(id).mat();
      if (x.requires_grad()) {
        Tensor<S> dcols({To, cin * K});
        dcols.mat().noalias() = G * wm_cache->mat().transpose();
        auto dx = g.grad_acc(x.id).mat();
        for (int t = 0; t < To; ++t) {
          const int base = t * stride - pad;
          for (int k = 0; k < K; ++k) {
            const int src = base + k;
            if (src < 0 || src >= T) continue;
            for (int c = 0; c < cin; ++c) dx(src, c) += dcols.mat()(t, c * K + k);
          }
        }
      }
      if (w.requires_grad()) {
        Tensor<S> dwm({cin * K, cout});
        dwm.mat().noalias() = cols->mat().transpose() * G;
        Tensor<S>& dw = g.grad_acc(w.id);
        for (int o = 0; o < cout; ++o)
          for (int c = 0; c < cin; ++c)
            for (int k = 0; k < K; ++k)
              dw[(long(o) * cin + c) * K + k] += dwm[(long(c) * K + k) * cout + o];
      }
    });
  }
  return {&g, id};
}

template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b, int stride = 1, int pad = 0) {
  Var<S> y = conv1d(x, w, stride, pad);
  if (b.val().rank() != 1 || b.val().dim(0) != w.val().dim(0))
    throw std::invalid_argument("conv1d: bias shape " + shape_str(b.val().shape()) +
                                " does not match Cout " + std::to_string(w.val().dim(0)));
  return add_rowvec(y, b);
}

/// Complex convolution built from four real ones:
/// out = (hr*wr - hi*wi) + i (hr*wi + hi*wr), plus a complex bias.
template <typename S>
CVar<S> complex_conv1d(CVar<S> h, CVar<S> w, CVar<S> b, int stride = 1, int pad = 0) {
  Var<S> rr = conv1d(h.re, w.re, stride, pad);
  Var<S> ii = conv1d(h.im, w.im, stride, pad);
  Var<S> ri = conv1d(h.re, w.im, stride, pad);
  Var<S> ir = conv1d(h.im, w.re, stride, pad);
  return {add_rowvec(sub(rr, ii), b.re), add_rowvec(add(ri, ir), b.im)};
}

// ---------------------------------------------------------------------------
// Batch normalization.
//
// Rank-2 input T x C normalizes each column over rows; rank-3 input
// B x C x T normalizes each channel over batch and time. Training mode
// uses batch statistics (biased variance) and updates running stats with
// the given momentum; eval mode uses the running stats.

template <typename S>
Var<S> batchnorm1d(Var<S> x, Var<S> gamma, Var<S> beta, Tensor<S>& running_mean,
                   Tensor<S>& running_var, bool training, S momentum = S(0.1),
                   S eps = S(1e-5)) {
  Graph<S>& g = detail::same_graph(x, gamma);
  detail::same_graph(gamma, beta);
  const Tensor<S>& xv = x.val();
  int C, m;
  if (xv.rank() == 2) {
    C = xv.dim(1);
    m = xv.dim(0);
  } else if (xv.rank() == 3) {
    C = xv.dim(1);
    m = xv.dim(0) * xv.dim(2);
  } else {
    throw std::invalid_argument("batchnorm1d: want rank 2 or 3, got " + shape_str(xv.shape()));
  }
  if (m == 0) throw std::invalid_argument("batchnorm1d: zero-size batch");
  if (gamma.val().size() != C || beta.val().size() != C ||
      running_mean.size() != C || running_var.size() != C)
    throw std::invalid_argument("batchnorm1d: channel mismatch, input " +
                                shape_str(xv.shape()) + " vs gamma " +
                                shape_str(gamma.val().shape()));

  // index of element j within channel c
  const int T = xv.rank() == 3 ? xv.dim(2) : xv.dim(0);
  auto at = [C, T, rank = xv.rank()](int c, int j) -> long {
    if (rank == 2) return long(j) * C + c;  // j = row
    const int b = j / T, t = j % T;
    return (long(b) * C + c) * T + t;
  };

  auto mean = std::make_shared<VecX<S>>(C);
  auto invstd = std::make_shared<VecX<S>>(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      S mu = 0;
      for (int j = 0; j < m; ++j) mu += xv[at(c, j)];
      mu /= S(m);
      S var = 0;
      for (int j = 0; j < m; ++j) {
        const S d = xv[at(c, j)] - mu;
        var += d * d;
      }
      var /= S(m);
      (*mean)(c) = mu;
      (*invstd)(c) = S(1) / std::sqrt(var + eps);
      running_mean[c] = (S(1) - momentum) * running_mean[c] + momentum * mu;
      const S var_unbiased = m > 1 ? var * S(m) / S(m - 1) : var;
      running_var[c] = (S(1) - momentum) * running_var[c] + momentum * var_unbiased;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)(c) = running_mean[c];
      (*invstd)(c) = S(1) / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor<S> out(xv.shape());
  const Tensor<S>& gv = gamma.val();
  const Tensor<S>& bv = beta.val();
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < m; ++j) {
      const long i = at(c, j);
      out[i] = gv[c] * (xv[i] - (*mean)(c)) * (*invstd)(c) + bv[c];
    }

  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, x, gamma, beta, mean, invstd, at, C, m, training]() {
      Tensor<S>& go = g.grad(id);
      const Tensor<S>& xv = x.val();
      const Tensor<S>& gv = gamma.val();
      for (int c = 0; c < C; ++c) {
        S sum_g = 0, sum_gx = 0;
        for (int j = 0; j < m; ++j) {
          const long i = at(c, j);
          const S xh = (xv[i] - (*mean)(c)) * (*invstd)(c);
          sum_g += go[i];
          sum_gx += go[i] * xh;
        }
        if (gamma.requires_grad()) g.grad_acc(gamma.id)[c] += sum_gx;
        if (beta.requires_grad()) g.grad_acc(beta.id)[c] += sum_g;
        if (x.requires_grad()) {
          Tensor<S>& dx = g.grad_acc(x.id);
          const S k = gv[c] * (*invstd)(c);
          if (training) {
            for (int j = 0; j < m; ++j) {
              const long i = at(c, j);
              const S xh = (xv[i] - (*mean)(c)) * (*invstd)(c);
              dx[i] += k * (go[i] - sum_g / S(m) - xh * sum_gx / S(m));
            }
          } else {
            for (int j = 0; j < m; ++j) {
              const long i = at(c, j);
              dx[i] += k * go[i];
            }
          }
        }
      }
    });
  }
  return {&g, id};
}

// ---------------------------------------------------------------------------
// Softmax. Rank-1 input is treated as a single row. Stabilized by
// max-subtraction; rows of the output sum to 1.

template <typename S>
Var<S> row_softmax(Var<S> x, S temperature = S(1)) {
  if (temperature <= S(0)) throw std::invalid_argument("row_softmax: temperature must be > 0");
  Graph<S>& g = *x.g;
  const Tensor<S>& xv = x.val();
  const int rows = xv.rank() == 1 ? 1 : xv.dim(0);
  const int cols = xv.rank() == 1 ? xv.dim(0) : xv.dim(1);
  Tensor<S> out(xv.shape());
  for (int r = 0; r < rows; ++r) {
    const S* xi = xv.data() + long(r) * cols;
    S* yi = out.data() + long(r) * cols;
    S mx = xi[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xi[c]);
    S sum = 0;
    for (int c = 0; c < cols; ++c) {
      yi[c] = std::exp((xi[c] - mx) / temperature);
      sum += yi[c];
    }
    for (int c = 0; c < cols; ++c) yi[c] /= sum;
  }
  const bool rg = x.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, x, rows, cols, temperature]() {
      Tensor<S>& go = g.grad(id);
      Tensor<S>& dx = g.grad_acc(x.id);
      const Tensor<S>& yv = g.val(id);
      for (int r = 0; r < rows; ++r) {
        const S* gi = go.data() + long(r) * cols;
        const S* yi = yv.data() + long(r) * cols;
        S dot = 0;
        for (int c = 0; c < cols; ++c) dot += gi[c] * yi[c];
        S* di = dx.data() + long(r) * cols;
        for (int c = 0; c < cols; ++c) di[c] += yi[c] * (gi[c] - dot) / temperature;
      }
    });
  }
  return {&g, id};
}

/// Normalize each row to unit L2 norm, with a floor on the norm.
template <typename S>
Var<S> row_l2_normalize(Var<S> x, S eps = S(1e-8)) {
  Graph<S>& g = *x.g;
  const Tensor<S>& xv = x.val();
  if (xv.rank() != 2) throw std::invalid_argument("row_l2_normalize: want rank-2 input");
  const int n = xv.rows(), c = xv.cols();
  auto norms = std::make_shared<VecX<S>>(n);
  Tensor<S> out(xv.shape());
  for (int r = 0; r < n; ++r) {
    const S nr = std::max(xv.mat().row(r).norm(), eps);
    (*norms)(r) = nr;
    out.mat().row(r) = xv.mat().row(r) / nr;
  }
  const bool rg = x.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    g.set_backward(id, [&g, id, x, norms, n, c, eps]() {
      auto G = g.grad(id).mat();
      auto Y = g.val(id).mat();
      auto X = x.val().mat();
      auto dX = g.grad_acc(x.id).mat();
      for (int r = 0; r < n; ++r) {
        const S nr = (*norms)(r);
        if (X.row(r).norm() > eps) {
          const S dot = G.row(r).dot(Y.row(r));
          dX.row(r) += (G.row(r) - Y.row(r) * dot) / nr;
        } else {
          dX.row(r) += G.row(r) / eps;
        }
      }
    });
  }
  return {&g, id};
}

// ---------------------------------------------------------------------------
// Differentiable inverse STFT. Input is the spectrogram split into real
// and imaginary parts (frames x bins); output is a length-out_len signal.
// The synthesis is linear, so the backward pass is its adjoint.

template <typename S>
Var<S> istft_op(Var<S> re, Var<S> im, StftConfig cfg, int out_len) {
  Graph<S>& g = detail::same_graph(re, im);
  const Tensor<S>& rv = re.val();
  const Tensor<S>& iv = im.val();
  detail::require_same_shape(rv, iv, "istft");
  if (rv.rank() != 2 || rv.cols() != cfg.bins())
    throw std::invalid_argument("istft: spectrogram has " + shape_str(rv.shape()) +
                                ", config expects " + std::to_string(cfg.bins()) + " bins");
  const int frames = rv.rows();

  ComplexSpectrogram spec;
  spec.hop = cfg.hop;
  spec.win_len = cfg.win_len;
  spec.data.resize(frames, cfg.bins());
  for (int f = 0; f < frames; ++f)
    for (int b = 0; b < cfg.bins(); ++b) {
      // DC and Nyquist bins of a real signal are real; project imag away
      const double ip = (b == 0 || b == cfg.bins() - 1) ? 0.0 : double(iv.mat()(f, b));
      spec.data(f, b) = {double(rv.mat()(f, b)), ip};
    }
  Waveform y = istft(spec, cfg, out_len);

  Tensor<S> out({out_len});
  for (int i = 0; i < out_len; ++i) out[i] = S(y.samples[i]);

  const bool rg = re.requires_grad() || im.requires_grad();
  const int id = g.add_node(std::move(out), rg);
  if (rg) {
    // overlap-added squared-window normalizer and the low-coverage
    // cutoff, exactly as used by the forward pass
    const std::vector<double> win = cfg.window();
    const int span = (frames - 1) * cfg.hop + cfg.win_len;
    auto den = std::make_shared<std::vector<double>>(span, 0.0);
    for (int f = 0; f < frames; ++f)
      for (int k = 0; k < cfg.win_len; ++k) (*den)[f * cfg.hop + k] += win[k] * win[k];
    double den_max = 0.0;
    for (double d : *den) den_max = std::max(den_max, d);
    const double cutoff = 0.5 * den_max;

    g.set_backward(id, [&g, id, re, im, cfg, out_len, frames, den, cutoff]() {
      const Tensor<S>& go = g.grad(id);
      const std::vector<double> win = cfg.window();
      const int span = int(den->size());
      std::vector<double> gacc(span, 0.0);
      const int n = std::min(out_len, span);
      for (int i = 0; i < n; ++i)
        gacc[i] = (*den)[i] > cutoff ? double(go[i]) / (*den)[i] : 0.0;

      std::vector<double> gframe(cfg.fft_size, 0.0);
      Tensor<S>* dre = re.requires_grad() ? &g.grad_acc(re.id) : nullptr;
      Tensor<S>* dim = im.requires_grad() ? &g.grad_acc(im.id) : nullptr;
      for (int f = 0; f < frames; ++f) {
        const int off = f * cfg.hop;
        for (int k = 0; k < cfg.win_len; ++k) gframe[k] = win[k] * gacc[off + k];
        std::vector<std::complex<double>> gf = rfft(gframe, cfg.fft_size);
        for (int b = 0; b < cfg.bins(); ++b) {
          const bool edge = b == 0 || b == cfg.bins() - 1;
          const double c = edge ? 1.0 : 2.0;
          if (dre) (*dre)[long(f) * cfg.bins() + b] += S(c / cfg.fft_size * gf[b].real());
          if (dim && !edge) (*dim)[long(f) * cfg.bins() + b] += S(c / cfg.fft_size * gf[b].imag());
        }
      }
    });
  }
  return {&g, id};
}

}  // namespace avsep
