// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/ops.hpp"

namespace avsep {

struct LossConfig {
  double alpha = 1.0;       // SI-SDR weight in the combined objective
  double mag_floor = 1e-7;  // keeps the log away from silent bins
  double sisdr_eps = 1e-8;
};

/// Frobenius norm of the log-magnitude ratio:
/// || log((|Y| + eps) / (|Yhat| + eps)) ||_2 over all bins.
template <typename S>
Var<S> mag_loss(Var<S> y_mag, Var<S> yhat_mag, S floor = S(1e-7)) {
  detail::require_same_shape(y_mag.val(), yhat_mag.val(), "mag_loss");
  Var<S> d = sub(logv(add_const(y_mag, floor)), logv(add_const(yhat_mag, floor)));
  return sqrtv(sum_all(mul(d, d)));
}

/// Negative cosine similarity of the two waveforms; in [-1, 1], and -1
/// exactly when the estimate matches the reference up to positive scale.
template <typename S>
Var<S> sisdr_loss(Var<S> y, Var<S> yhat, S eps = S(1e-8)) {
  if (y.val().size() != yhat.val().size())
    throw std::invalid_argument("sisdr_loss: length mismatch " + shape_str(y.val().shape()) +
                                " vs " + shape_str(yhat.val().shape()));
  Var<S> dot = sum_all(mul(y, yhat));
  Var<S> ey = sum_all(mul(y, y));
  Var<S> eh = sum_all(mul(yhat, yhat));
  Var<S> denom = sqrtv(add_const(mul(ey, eh), eps * eps));
  return mul_const(divide(dot, denom), S(-1));
}

/// Magnitude-only objective of the real variant.
template <typename S>
Var<S> total_loss_real(Var<S> y_mag, Var<S> yhat_mag, const LossConfig& cfg = {}) {
  return mag_loss(y_mag, yhat_mag, S(cfg.mag_floor));
}

/// Combined objective of the complex variant: L_MAG + alpha * L_SI-SDR,
/// with the time-domain terms obtained by inverse STFT of both spectrograms.
template <typename S>
Var<S> total_loss_complex(Var<S> y_re, Var<S> y_im, Var<S> yhat_re, Var<S> yhat_im,
                          const StftConfig& scfg, int out_len, const LossConfig& cfg = {}) {
  Var<S> lm = mag_loss(complex_abs(y_re, y_im), complex_abs(yhat_re, yhat_im),
                       S(cfg.mag_floor));
  Var<S> ty = istft_op(y_re, y_im, scfg, out_len);
  Var<S> th = istft_op(yhat_re, yhat_im, scfg, out_len);
  Var<S> ls = sisdr_loss(ty, th, S(cfg.sisdr_eps));
  return add(lm, mul_const(ls, S(cfg.alpha)));
}

}  // namespace avsep
