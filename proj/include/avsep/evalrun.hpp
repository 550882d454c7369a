// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/pipeline.hpp"
#include "avsep/trainer.hpp"

#include <optional>
#include <thread>

namespace avsep {

struct EvalOptions {
  std::optional<int> forced_offset;  // regenerate records at this offset
  bool passthrough = false;          // enhanced := mixture
  bool probe_offsets = false;        // estimate offsets from the raw featurizer
  int jobs = 1;
};

namespace detail {

template <typename Fn>
void parallel_for(int n, int jobs, Fn fn) {
  jobs = std::max(jobs, 1);
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int per = (n + jobs - 1) / jobs;
  for (int t = 0; t < jobs; ++t) {
    const int lo = std::min(t * per, n), hi = std::min(lo + per, n);
    if (lo < hi)
      pool.emplace_back([fn, lo, hi]() {
        for (int i = lo; i < hi; ++i) fn(i);
      });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Audio-row ranges that sit clearly before and after a jitter band
/// break. With window lead L the aligned band maps audio row i to
/// stacked column (L - 2) + offset + i/4; the jitter at raw frame t
/// disturbs stacked columns t-5 .. t-2+tau, and everything after shows
/// content tau frames late.
inline std::pair<int, int> jitter_probe_ranges(const JitterSpec& jit, int offset,
                                               int lead_frames, int n_audio_frames) {
  int pre_end = 4 * (jit.t - lead_frames - 6 - offset);
  int post_begin = 4 * (jit.t - lead_frames + 3 - offset);
  pre_end = std::clamp(pre_end, 4, n_audio_frames);
  post_begin = std::clamp(post_begin, 0, n_audio_frames - 4);
  return {pre_end, post_begin};
}

/// Offset estimate from the synthetic featurizer alone: identity
/// projections over probe features of the record's target utterance.
inline int probe_offset_estimate(const DataConfig& dcfg, const VisualFeaturizer& feat,
                                 const RecordMeta& meta, const RowMatrixXd& visual,
                                 int offset) {
  const Waveform utt =
      record_target_utterance(dcfg, SyntheticSpeaker::make(meta.speaker_target), meta.seed);
  const StftConfig scfg;
  const int n = stft_frames(int(std::lround(dcfg.segment_seconds * 16000.0)), scfg);
  const RowMatrixXd s = probe_audio_features(dcfg, feat, utt, offset, n);
  const RowMatrixXd A = affinity_matrix(s, visual);
  const auto masks =
      build_diagonal_masks(int(A.rows()), int(A.cols()), 4, dcfg.offset_range);
  return estimate_offset(A, masks);
}

/// Evaluate a split. With forced_offset, every record is regenerated from
/// its metadata at that offset (jitter off), mirroring the sweep protocol.
template <typename S>
EvalReport evaluate_corpus(Model<S>* model, const CorpusManifest& man, const DataConfig& dcfg,
                           const EvalOptions& opt) {
  if (!opt.passthrough && model == nullptr)
    throw std::invalid_argument("evaluate_corpus: need a model unless passthrough is set");
  EvalReport report;
  report.rows.resize(man.records.size());
  const VisualFeaturizer feat(dcfg.visual_dim);
  detail::parallel_for(int(man.records.size()), opt.jobs, [&](int i) {
    const RecordMeta& meta = man.records[i];
    SampleRecord rec;
    int offset = meta.offset;
    if (opt.forced_offset) {
      offset = *opt.forced_offset;
      rec = make_record(dcfg, feat, SyntheticSpeaker::make(meta.speaker_target),
                        SyntheticSpeaker::make(meta.speaker_interferer), offset, JitterSpec{},
                        meta.seed);
    } else {
      rec = load_record(man, meta);
    }
    EvalRow row;
    row.true_offset = offset;
    row.si_sdr_in = si_sdr_db(rec.target, rec.mixture);
    if (opt.passthrough) {
      row.si_sdr_out = row.si_sdr_in;
      row.est_offset = offset;
    } else {
      Separation<S> sep = separate(*model, rec.mixture, rec.visual);
      row.si_sdr_out = si_sdr_db(rec.target, sep.enhanced);
      row.est_offset = sep.est_offset;
    }
    if (opt.probe_offsets)
      row.est_offset = probe_offset_estimate(dcfg, feat, meta, rec.visual, offset);
    row.si_sdri = row.si_sdr_out - row.si_sdr_in;
    report.rows[i] = row;
  });
  return report;
}

struct SweepRow {
  int offset;
  int count;
  double mean_si_sdri;
  double median_si_sdri;
  double offset_accuracy;
};

/// Fig. 3-style protocol: one evaluation per offset in [-range, +range].
template <typename S>
std::vector<SweepRow> sweep_offsets(Model<S>& model, const CorpusManifest& man,
                                    const DataConfig& dcfg, const std::vector<int>& offsets,
                                    int jobs = 1) {
  std::vector<SweepRow> rows;
  for (int o : offsets) {
    EvalOptions opt;
    opt.forced_offset = o;
    opt.jobs = jobs;
    const EvalReport rep = evaluate_corpus(&model, man, dcfg, opt);
    const auto aggs = rep.aggregates();
    SweepRow r{o, int(rep.rows.size()), rep.mean_si_sdri(), 0.0, rep.offset_accuracy()};
    if (!aggs.empty()) r.median_si_sdri = aggs.front().median_si_sdri;
    rows.push_back(r);
  }
  return rows;
}

inline void sweep_to_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "# waveform metric: SI-SDR (dB), not BSS-eval SDR\n";
  out << "offset,count,mean_si_sdri,median_si_sdri,offset_accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.3f,%.3f,%.3f\n", r.offset, r.count, r.mean_si_sdri,
                  r.median_si_sdri, r.offset_accuracy);
    out << buf;
  }
}

}  // namespace avsep
