// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace avsep {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXcd =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mono waveform, amplitude roughly in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  int size() const { return static_cast<int>(samples.size()); }
  double duration() const { return size() / sample_rate; }
};

/// Analysis parameters for the short-time transform. The window is a
/// periodic Hann of length win_len, zero-padded to fft_size per frame;
/// at hop = 160 it satisfies constant overlap-add.
struct StftConfig {
  int fft_size = 512;
  int win_len = 400;  // 25 ms at 16 kHz
  int hop = 160;      // 10 ms

  int bins() const { return fft_size / 2 + 1; }
  std::vector<double> window() const;
  void validate() const;
};

/// Frame-major complex spectrogram: row = frame, column = frequency bin.
struct ComplexSpectrogram {
  RowMatrixXcd data;  // frames x bins
  int hop = 160;
  int win_len = 400;

  int frames() const { return static_cast<int>(data.rows()); }
  int bins() const { return static_cast<int>(data.cols()); }
};

/// Real-input FFT helpers (n must be a power of two). fwd returns
/// n/2 + 1 bins; inv expects the half spectrum and the target length n.
std::vector<std::complex<double>> rfft(const std::vector<double>& x, int n);
std::vector<double> irfft(const std::vector<std::complex<double>>& half, int n);

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});
Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg, int out_len);

/// Polar split. Phase of a zero-magnitude bin is 0.
void decompose(const ComplexSpectrogram& s, RowMatrixXd& magnitude, RowMatrixXd& phase);
ComplexSpectrogram recompose(const RowMatrixXd& magnitude, const RowMatrixXd& phase,
                             int hop = 160, int win_len = 400);

/// Expected frame count for a signal of the given length: 1 + floor((len - win) / hop).
int stft_frames(int len, const StftConfig& cfg);

}  // namespace avsep
