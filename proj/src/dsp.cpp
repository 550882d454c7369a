// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <stdexcept>

namespace avsep {

std::vector<double> StftConfig::window() const {
  std::vector<double> w(win_len);
  for (int k = 0; k < win_len; ++k)
    w[k] = 0.5 - 0.5 * std::cos(2.0 * M_PI * k / win_len);
  return w;
}

void StftConfig::validate() const {
  if (!(hop > 0 && hop <= win_len && win_len <= fft_size))
    throw std::invalid_argument("stft config requires 0 < hop <= win_len <= fft_size");
  if ((fft_size & (fft_size - 1)) != 0)
    throw std::invalid_argument("fft_size must be a power of two");
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x, int n) {
  if (static_cast<int>(x.size()) != n)
    throw std::invalid_argument("rfft: input length does not match n");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> out;
  fft.fwd(out, x);
  return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& half, int n) {
  if (static_cast<int>(half.size()) != n / 2 + 1)
    throw std::invalid_argument("irfft: expected n/2+1 bins");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> out;
  fft.inv(out, half, n);
  return out;
}

int stft_frames(int len, const StftConfig& cfg) {
  return 1 + (len - cfg.win_len) / cfg.hop;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const int len = w.size();
  if (len < cfg.win_len) throw std::invalid_argument("input too short");

  const int n_frames = stft_frames(len, cfg);
  const std::vector<double> win = cfg.window();

  ComplexSpectrogram s;
  s.hop = cfg.hop;
  s.win_len = cfg.win_len;
  s.data.resize(n_frames, cfg.bins());

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spec;
  for (int f = 0; f < n_frames; ++f) {
    const int off = f * cfg.hop;
    for (int k = 0; k < cfg.win_len; ++k) frame[k] = win[k] * w.samples[off + k];
    // tail beyond win_len stays zero (zero-padded transform)
    fft.fwd(spec, frame);
    for (int b = 0; b < cfg.bins(); ++b) s.data(f, b) = spec[b];
  }
  return s;
}

Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg, int out_len) {
  cfg.validate();
  if (s.bins() != cfg.bins())
    throw std::invalid_argument("istft: spectrogram has " + std::to_string(s.bins()) +
                                " bins but config expects " + std::to_string(cfg.bins()));

  const std::vector<double> win = cfg.window();
  const int n_frames = s.frames();
  const int span = (n_frames - 1) * cfg.hop + cfg.win_len;

  std::vector<double> acc(span, 0.0), den(span, 0.0);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec(cfg.bins());
  std::vector<double> frame;
  for (int f = 0; f < n_frames; ++f) {
    for (int b = 0; b < cfg.bins(); ++b) spec[b] = s.data(f, b);
    fft.inv(frame, spec, cfg.fft_size);
    const int off = f * cfg.hop;
    for (int k = 0; k < cfg.win_len; ++k) {
      acc[off + k] += win[k] * frame[k];
      den[off + k] += win[k] * win[k];
    }
  }

  // samples with under half the interior window coverage are dropped:
  // dividing by a vanishing window sum amplifies any spectrogram
  // modification unboundedly at the edges
  double den_max = 0.0;
  for (double d : den) den_max = std::max(den_max, d);
  const double cutoff = 0.5 * den_max;

  Waveform out;
  out.samples.assign(out_len, 0.0);
  const int n = std::min(out_len, span);
  for (int i = 0; i < n; ++i)
    out.samples[i] = den[i] > cutoff ? acc[i] / den[i] : 0.0;
  return out;
}

void decompose(const ComplexSpectrogram& s, RowMatrixXd& magnitude, RowMatrixXd& phase) {
  magnitude.resize(s.frames(), s.bins());
  phase.resize(s.frames(), s.bins());
  for (int f = 0; f < s.frames(); ++f) {
    for (int b = 0; b < s.bins(); ++b) {
      const std::complex<double> z = s.data(f, b);
      const double m = std::abs(z);
      magnitude(f, b) = m;
      phase(f, b) = m == 0.0 ? 0.0 : std::atan2(z.imag(), z.real());
    }
  }
}

ComplexSpectrogram recompose(const RowMatrixXd& magnitude, const RowMatrixXd& phase,
                             int hop, int win_len) {
  if (magnitude.rows() != phase.rows() || magnitude.cols() != phase.cols())
    throw std::invalid_argument("recompose: magnitude/phase shape mismatch");
  ComplexSpectrogram s;
  s.hop = hop;
  s.win_len = win_len;
  s.data.resize(magnitude.rows(), magnitude.cols());
  for (int f = 0; f < magnitude.rows(); ++f)
    for (int b = 0; b < magnitude.cols(); ++b)
      s.data(f, b) = std::polar(magnitude(f, b), phase(f, b));
  return s;
}

}  // namespace avsep
