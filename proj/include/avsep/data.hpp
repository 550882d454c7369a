// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/dsp.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace avsep {

/// Harmonic stand-in for a recorded speaker: an f0 random walk inside a
/// narrow speaker band, a formant-shaped harmonic amplitude profile, and
/// a syllable-rate amplitude envelope. Deterministic given (id, seed).
struct SyntheticSpeaker {
  int id = 0;
  double f0_lo = 90.0, f0_hi = 160.0;
  double rolloff = 1.0;      // harmonic amplitude ~ h^-rolloff
  double syllable_hz = 3.0;  // envelope rate, 2..6 Hz
  double formant[3] = {500, 1300, 3000};    // resonance centers, Hz
  double bandwidth[3] = {180, 260, 400};    // resonance widths, Hz

  static SyntheticSpeaker make(int id);
};

Waveform synth_utterance(const SyntheticSpeaker& spk, double dur_seconds, uint64_t seed);

/// Sample-wise sum; no renormalization, so mixture - target == interferer.
Waveform make_mixture(const Waveform& target, const Waveform& interferer);

/// Span of visual content that must be available for an audio span
/// [t, t + delta] under the given frame offset (40 ms per frame):
/// negative offsets extend the span left, positive ones right.
std::pair<double, double> apply_shift(double t, double delta, int offset_frames);

/// Video jitter: frames t .. t+tau-1 (1-based) show frame t-1 again and
/// the remaining content arrives tau frames late; length is unchanged.
/// Operates on per-frame rows before 5-frame stacking.
RowMatrixXd apply_jitter(const RowMatrixXd& raw_frames, int t, int tau);

/// Stand-in for the pretrained visual front end: each video frame is
/// summarized by the log-magnitude spectrum of the 40 ms span centered
/// on it; 5 consecutive frames are stacked and projected through a fixed
/// random semi-orthogonal matrix (seeded globally), so a stream of T
/// frames yields M = T - 4 feature rows.
class VisualFeaturizer {
 public:
  explicit VisualFeaturizer(int out_dim);

  int out_dim() const { return out_dim_; }
  int raw_dim() const { return raw_bins_; }

  /// Per-frame spectra at 25 fps, frame r centered at t0 + 0.04 r + 0.02.
  RowMatrixXd raw_frames(const Waveform& w, double t0, int n_frames) const;

  /// 5-frame stacking + projection: (T x raw) -> (T-4 x out_dim).
  RowMatrixXd stack_project(const RowMatrixXd& raw) const;

  /// Stacked-projected features for arbitrary span centers (seconds).
  /// Row i stacks the five 40 ms spans centered at centers[i] + k * 0.04,
  /// k in {-2..2}. Identical arithmetic to raw_frames + stack_project.
  RowMatrixXd features_at(const Waveform& w, const std::vector<double>& centers) const;

 private:
  Eigen::RowVectorXd frame_feature(const Waveform& w, double center) const;

  int out_dim_;
  int span_samples_ = 640;  // 40 ms at 16 kHz
  int fft_size_ = 1024;
  int raw_bins_ = 513;
  RowMatrixXd projection_;  // out_dim x 5*raw_bins, orthonormal rows
};

// ---------------------------------------------------------------------------
// Records and corpora.

struct JitterSpec {
  int t = 0;    // 1-based first dropped frame; 0 means no jitter
  int tau = 0;  // dropped frame count, <= 8
  bool active() const { return tau > 0; }
};

struct SampleRecord {
  Waveform mixture, target;
  RowMatrixXd visual;  // M x visual_dim
  int applied_offset = 0;
  JitterSpec jitter;
  uint64_t seed = 0;
};

struct DataConfig {
  double segment_seconds = 2.0;
  int visual_dim = 32;
  int lead_frames = 10;       // visual window margin on each side, video frames
  double edge_margin = 0.1;   // utterance padding beyond the window, seconds
  int offset_range = 9;
  double snr_spread_db = 0.0;  // target/interferer ratio drawn from 0 +- spread

  double base_audio_start() const { return edge_margin + 0.04 * lead_frames; }
  double utterance_seconds() const {
    return segment_seconds + 2.0 * base_audio_start();
  }
  int visual_window_frames() const {
    return int(std::lround(25.0 * (segment_seconds + 0.08 * lead_frames)));
  }
};

/// Generate one record: target speech re-timed by the offset inside a
/// fixed visual window, mixed with an interfering speaker at ~0 dB.
SampleRecord make_record(const DataConfig& cfg, const VisualFeaturizer& feat,
                         const SyntheticSpeaker& target, const SyntheticSpeaker& interferer,
                         int offset, JitterSpec jitter, uint64_t seed);
SampleRecord make_record(const DataConfig& cfg, const SyntheticSpeaker& target,
                         const SyntheticSpeaker& interferer, int offset, JitterSpec jitter,
                         uint64_t seed);

/// Probe features on the audio frame grid (10 ms) of a record's target
/// utterance, for offset estimation without any trained weights.
RowMatrixXd probe_audio_features(const DataConfig& cfg, const VisualFeaturizer& feat,
                                 const Waveform& target_utterance, int offset, int n_frames);

/// Target utterance regenerated from record metadata (pure function of
/// speaker and seed), as used by make_record.
Waveform record_target_utterance(const DataConfig& cfg, const SyntheticSpeaker& spk,
                                 uint64_t record_seed);

struct RecordMeta {
  std::string mix_path, target_path, visual_path;  // relative to manifest dir
  int speaker_target = 0, speaker_interferer = 0;
  int offset = 0;
  JitterSpec jitter;
  uint64_t seed = 0;
};

struct CorpusManifest {
  std::string split;
  std::string dir;  // directory holding the manifest
  std::vector<RecordMeta> records;
};

struct CorpusConfig {
  DataConfig data;
  int n_train = 512, n_val = 64, n_test = 64;
  int speakers_per_split = 8;
  double jitter_prob = 0.0;
  uint64_t seed = 0;
  int jobs = 1;

  std::string to_kv() const;
  static CorpusConfig from_kv(const std::string& text);  // unknown keys rejected
};

/// Generation parameters of a corpus on disk (written as corpus.cfg next
/// to the split directories); eval-time regeneration reads this back.
CorpusConfig read_corpus_config(const std::string& corpus_dir);

/// Record metadata for one split before any synthesis happens. Each
/// record derives its own seed, so generation order does not matter.
std::vector<RecordMeta> plan_split(const CorpusConfig& cfg, int split_index, int count,
                                   int speaker_base);

/// Write train/val/test splits with disjoint speaker pools under out_dir;
/// one manifest.tsv per split. Deterministic in (config, seed), at any
/// job count: records are synthesized in parallel but written in order.
std::vector<CorpusManifest> build_corpus(const std::string& out_dir, const CorpusConfig& cfg);

CorpusManifest read_manifest(const std::string& path);
SampleRecord load_record(const CorpusManifest& manifest, const RecordMeta& meta);

// Visual feature file: magic "AVF1", u32 rows, u32 cols, f32 LE row-major.
void write_avf1(const std::string& path, const RowMatrixXd& m);
RowMatrixXd read_avf1(const std::string& path);

}  // namespace avsep
