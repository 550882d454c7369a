// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/data.hpp"
#include "avsep/losses.hpp"
#include "avsep/metrics.hpp"
#include "avsep/model.hpp"

namespace avsep {

template <typename S>
struct Separation {
  Waveform enhanced;
  RowMatrixXd affinity;        // N x M
  Eigen::VectorXd posterior;   // over the 19 offsets
  int est_offset = 0;
};

/// Run the model on one mixture in eval mode. The real variant masks the
/// magnitude and reuses the mixture phase; the complex variant applies
/// the complex mask to the spectrogram directly.
template <typename S>
Separation<S> separate(Model<S>& model, const Waveform& mixture, const RowMatrixXd& visual) {
  const StftConfig scfg;
  const ComplexSpectrogram X = stft(mixture, scfg);
  Graph<S> g;
  Separation<S> out;

  Tensor<S> vis = Tensor<double>::from_matrix(visual).template cast<S>();
  typename Model<S>::Output fwd;
  if (model.config().variant == Variant::kReal) {
    RowMatrixXd mag, phase;
    decompose(X, mag, phase);
    fwd = model.forward_real(g, Tensor<double>::from_matrix(mag).template cast<S>(), vis,
                             /*training=*/false);
    const RowMatrixXd yhat_mag = fwd.yhat_mag.val().template cast<double>().mat();
    out.enhanced = istft(recompose(yhat_mag, phase, scfg.hop, scfg.win_len), scfg,
                         mixture.size());
  } else {
    RowMatrixXd xre(X.frames(), X.bins()), xim(X.frames(), X.bins());
    for (int f = 0; f < X.frames(); ++f)
      for (int b = 0; b < X.bins(); ++b) {
        xre(f, b) = X.data(f, b).real();
        xim(f, b) = X.data(f, b).imag();
      }
    fwd = model.forward_complex(g, Tensor<double>::from_matrix(xre).template cast<S>(),
                                Tensor<double>::from_matrix(xim).template cast<S>(), vis,
                                /*training=*/false);
    ComplexSpectrogram Y;
    Y.hop = scfg.hop;
    Y.win_len = scfg.win_len;
    Y.data.resize(X.frames(), X.bins());
    const RowMatrixXd yre = fwd.yhat_re.val().template cast<double>().mat();
    const RowMatrixXd yim = fwd.yhat_im.val().template cast<double>().mat();
    for (int f = 0; f < X.frames(); ++f)
      for (int b = 0; b < X.bins(); ++b) Y.data(f, b) = {yre(f, b), yim(f, b)};
    out.enhanced = istft(Y, scfg, mixture.size());
  }
  out.affinity = fwd.affinity.val().template cast<double>().mat();
  out.posterior = fwd.posterior.val().template cast<double>().vec();
  out.est_offset = estimate_offset(out.affinity, *fwd.masks);
  return out;
}

/// Training/validation objective for one record.
template <typename S>
Var<S> record_loss(Model<S>& model, Graph<S>& g, const SampleRecord& rec, bool training) {
  const StftConfig scfg;
  const ComplexSpectrogram X = stft(rec.mixture, scfg);
  const ComplexSpectrogram Y = stft(rec.target, scfg);
  Tensor<S> vis = Tensor<double>::from_matrix(rec.visual).template cast<S>();

  LossConfig lcfg;
  lcfg.alpha = model.config().alpha;
  if (model.config().variant == Variant::kReal) {
    RowMatrixXd xmag, xphase, ymag, yphase;
    decompose(X, xmag, xphase);
    decompose(Y, ymag, yphase);
    auto fwd = model.forward_real(g, Tensor<double>::from_matrix(xmag).template cast<S>(), vis,
                                  training);
    Var<S> y = g.value(Tensor<double>::from_matrix(ymag).template cast<S>());
    return total_loss_real(y, fwd.yhat_mag, lcfg);
  }
  auto split = [](const ComplexSpectrogram& sp, RowMatrixXd& re, RowMatrixXd& im) {
    re.resize(sp.frames(), sp.bins());
    im.resize(sp.frames(), sp.bins());
    for (int f = 0; f < sp.frames(); ++f)
      for (int b = 0; b < sp.bins(); ++b) {
        re(f, b) = sp.data(f, b).real();
        im(f, b) = sp.data(f, b).imag();
      }
  };
  RowMatrixXd xre, xim, yre, yim;
  split(X, xre, xim);
  split(Y, yre, yim);
  auto fwd = model.forward_complex(g, Tensor<double>::from_matrix(xre).template cast<S>(),
                                   Tensor<double>::from_matrix(xim).template cast<S>(), vis,
                                   training);
  Var<S> tyre = g.value(Tensor<double>::from_matrix(yre).template cast<S>());
  Var<S> tyim = g.value(Tensor<double>::from_matrix(yim).template cast<S>());
  return total_loss_complex(tyre, tyim, fwd.yhat_re, fwd.yhat_im, scfg, rec.target.size(),
                            lcfg);
}

}  // namespace avsep
