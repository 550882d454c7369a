// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/data.hpp"

#include "avsep/rng.hpp"
#include "avsep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace avsep {

namespace {

constexpr double kSampleRate = 16000.0;
constexpr double kFrameSec = 0.04;  // 25 fps
constexpr uint64_t kFeaturizerSeed = 0x76697375616c31ULL;

double rms(const double* x, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s / std::max(n, 1));
}

Waveform slice(const Waveform& w, double t0, int n) {
  const int i0 = int(std::lround(t0 * w.sample_rate));
  if (i0 < 0 || i0 + n > w.size())
    throw std::invalid_argument("slice outside generated utterance");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + i0, w.samples.begin() + i0 + n);
  return out;
}

}  // namespace

SyntheticSpeaker SyntheticSpeaker::make(int id) {
  SyntheticSpeaker s;
  s.id = id;
  Rng rng(mix_seed(0x73706bULL, uint64_t(id)));
  // a narrow speaker-specific f0 band inside the low (90-160 Hz, even
  // id) or high (170-260 Hz, odd id) register; the four slots per
  // register are spaced so that different speakers' f0 bands are
  // disjoint and their harmonic combs mostly so
  const int slot = (id / 2) % 4;
  const double center = id % 2 == 0 ? 99.0 + 52.0 / 3.0 * slot : 179.0 + 72.0 / 3.0 * slot;
  s.f0_lo = center - 8.0;
  s.f0_hi = center + 8.0;
  s.rolloff = rng.uniform(1.05, 1.15);
  s.syllable_hz = rng.uniform(2.0, 6.0);
  // formant-like resonances; the high register gets a shorter-tract
  // scaling so the registers stay spectrally ordered
  const double tract = id % 2 == 0 ? 1.0 : 1.35;
  s.formant[0] = tract * rng.uniform(380.0, 520.0);
  s.formant[1] = tract * rng.uniform(1150.0, 1550.0);
  s.formant[2] = tract * rng.uniform(2700.0, 3500.0);
  for (int k = 0; k < 3; ++k) s.bandwidth[k] = tract * rng.uniform(130.0, 230.0);
  return s;
}

Waveform synth_utterance(const SyntheticSpeaker& spk, double dur_seconds, uint64_t seed) {
  if (dur_seconds <= 0) throw std::invalid_argument("synth_utterance: duration must be > 0");
  const int n = int(std::lround(dur_seconds * kSampleRate));
  Rng rng(mix_seed(seed, uint64_t(spk.id)));

  // f0 random walk on a 10 ms grid, reflected at the band edges
  const int step = 160;
  const int n_steps = n / step + 2;
  std::vector<double> f0(n_steps);
  f0[0] = rng.uniform(spk.f0_lo, spk.f0_hi);
  for (int k = 1; k < n_steps; ++k) {
    double f = f0[k - 1] + 2.0 * rng.gaussian();
    if (f < spk.f0_lo) f = 2 * spk.f0_lo - f;
    if (f > spk.f0_hi) f = 2 * spk.f0_hi - f;
    f0[k] = std::clamp(f, spk.f0_lo, spk.f0_hi);
  }

  const int harmonics = std::max(3, int(7600.0 / spk.f0_hi));
  const double f0_center = 0.5 * (spk.f0_lo + spk.f0_hi);
  std::vector<double> amp(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    // harmonic rolloff shaped by the speaker's resonances, under a
    // radiation-like highpass so energy sits at the formants rather
    // than piling into the unresolved lowest bins
    const double f = (h + 1) * f0_center;
    double envelope = 0.05;
    for (int k = 0; k < 3; ++k) {
      const double d = (f - spk.formant[k]) / spk.bandwidth[k];
      envelope += 1.0 / (1.0 + d * d);
    }
    const double radiation = f * f / (f * f + 300.0 * 300.0);
    amp[h] = std::pow(double(h + 1), -spk.rolloff) * envelope * radiation;
  }

  const double env_phase = rng.uniform(0.0, 2.0 * M_PI);
  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(n);
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const int k = i / step;
    const double frac = double(i % step) / step;
    const double f = f0[k] + frac * (f0[k + 1] - f0[k]);
    phase += 2.0 * M_PI * f / kSampleRate;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      if ((h + 1) * f > 7800.0) break;
      v += amp[h] * std::sin(double(h + 1) * phase);
    }
    // syllable-rate envelope with near-silent troughs
    const double e = std::sin(2.0 * M_PI * spk.syllable_hz * i / kSampleRate + env_phase);
    const double env = e > 0 ? std::pow(e, 0.7) : 0.0;
    w.samples[i] = env * v;
    peak = std::max(peak, std::abs(w.samples[i]));
  }
  if (peak > 0)
    for (double& x : w.samples) x *= 0.5 / peak;
  // quiet broadband floor (-54 dB re the 0.5 peak); real recordings are
  // never digitally silent, and the log-magnitude objective needs the
  // trough bins bounded away from zero
  for (double& x : w.samples) x += 1e-3 * rng.gaussian();
  return w;
}

Waveform make_mixture(const Waveform& target, const Waveform& interferer) {
  if (target.size() != interferer.size())
    throw std::invalid_argument("make_mixture: length mismatch " +
                                std::to_string(target.size()) + " vs " +
                                std::to_string(interferer.size()));
  Waveform out = target;
  for (int i = 0; i < out.size(); ++i) out.samples[i] += interferer.samples[i];
  return out;
}

std::pair<double, double> apply_shift(double t, double delta, int offset_frames) {
  if (offset_frames < 0) return {t + kFrameSec * offset_frames, t + delta};
  if (offset_frames > 0) return {t, t + delta + kFrameSec * offset_frames};
  return {t, t + delta};
}

RowMatrixXd apply_jitter(const RowMatrixXd& raw_frames, int t, int tau) {
  const int T = int(raw_frames.rows());
  if (tau == 0) return raw_frames;
  if (t < 1 || tau < 0 || t + tau > T)
    throw std::invalid_argument("apply_jitter: frames " + std::to_string(t) + ".." +
                                std::to_string(t + tau - 1) + " out of range for " +
                                std::to_string(T) + " frames");
  RowMatrixXd out(T, raw_frames.cols());
  const int r0 = t - 1;  // 0-based first missing frame
  const int prev = std::max(r0 - 1, 0);
  for (int r = 0; r < r0; ++r) out.row(r) = raw_frames.row(r);
  for (int r = r0; r < r0 + tau; ++r) out.row(r) = raw_frames.row(prev);
  // remaining content arrives tau frames late; the tail is dropped
  for (int r = r0 + tau; r < T; ++r) out.row(r) = raw_frames.row(r - tau);
  return out;
}

// ---------------------------------------------------------------------------

VisualFeaturizer::VisualFeaturizer(int out_dim) : out_dim_(out_dim) {
  if (out_dim < 1) throw std::invalid_argument("featurizer: out_dim must be positive");
  const int in_dim = 5 * raw_bins_;
  Rng rng(kFeaturizerSeed);
  Eigen::MatrixXd g(in_dim, out_dim);
  for (int j = 0; j < out_dim; ++j)
    for (int i = 0; i < in_dim; ++i) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(in_dim, out_dim);
  projection_ = q.transpose();
}

Eigen::RowVectorXd VisualFeaturizer::frame_feature(const Waveform& w, double center) const {
  std::vector<double> span(fft_size_, 0.0);
  const int start = int(std::lround((center - 0.02) * kSampleRate));
  for (int k = 0; k < span_samples_; ++k) {
    const int i = start + k;
    const double x = (i >= 0 && i < w.size()) ? w.samples[i] : 0.0;
    const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * k / span_samples_);
    span[k] = win * x;
  }
  const auto spec = rfft(span, fft_size_);
  Eigen::RowVectorXd out(raw_bins_);
  for (int b = 0; b < raw_bins_; ++b) out(b) = std::log(std::abs(spec[b]) + 1e-6);
  // remove the common log-energy component so that cosine similarity
  // responds to spectral shape; silent frames become exactly zero
  out.array() -= out.mean();
  return out;
}

RowMatrixXd VisualFeaturizer::raw_frames(const Waveform& w, double t0, int n_frames) const {
  RowMatrixXd out(n_frames, raw_bins_);
  for (int r = 0; r < n_frames; ++r)
    out.row(r) = frame_feature(w, t0 + kFrameSec * r + 0.02);
  return out;
}

RowMatrixXd VisualFeaturizer::stack_project(const RowMatrixXd& raw) const {
  const int T = int(raw.rows());
  if (T < 5) throw std::invalid_argument("stack_project: need at least 5 frames");
  RowMatrixXd stacked(T - 4, 5 * raw_bins_);
  for (int m = 0; m < T - 4; ++m)
    for (int c = 0; c < 5; ++c) stacked.block(m, c * raw_bins_, 1, raw_bins_) = raw.row(m + c);
  return stacked * projection_.transpose();
}

RowMatrixXd VisualFeaturizer::features_at(const Waveform& w,
                                          const std::vector<double>& centers) const {
  RowMatrixXd stacked(int(centers.size()), 5 * raw_bins_);
  for (size_t i = 0; i < centers.size(); ++i)
    for (int c = 0; c < 5; ++c)
      stacked.block(int(i), c * raw_bins_, 1, raw_bins_) =
          frame_feature(w, centers[i] + (c - 2) * kFrameSec);
  return stacked * projection_.transpose();
}

// ---------------------------------------------------------------------------

Waveform record_target_utterance(const DataConfig& cfg, const SyntheticSpeaker& spk,
                                 uint64_t record_seed) {
  return synth_utterance(spk, cfg.utterance_seconds(), mix_seed(record_seed, 1));
}

SampleRecord make_record(const DataConfig& cfg, const SyntheticSpeaker& target,
                         const SyntheticSpeaker& interferer, int offset, JitterSpec jitter,
                         uint64_t seed) {
  return make_record(cfg, VisualFeaturizer(cfg.visual_dim), target, interferer, offset, jitter,
                     seed);
}

SampleRecord make_record(const DataConfig& cfg, const VisualFeaturizer& feat,
                         const SyntheticSpeaker& target, const SyntheticSpeaker& interferer,
                         int offset, JitterSpec jitter, uint64_t seed) {
  if (std::abs(offset) > cfg.offset_range || cfg.offset_range > cfg.lead_frames)
    throw std::invalid_argument("make_record: offset " + std::to_string(offset) +
                                " outside the visual window");
  const Waveform utt_t = record_target_utterance(cfg, target, seed);
  const Waveform utt_i = synth_utterance(interferer, cfg.utterance_seconds(), mix_seed(seed, 2));

  const int n_seg = int(std::lround(cfg.segment_seconds * kSampleRate));
  const double a0 = cfg.base_audio_start() + kFrameSec * offset;
  SampleRecord rec;
  rec.applied_offset = offset;
  rec.jitter = jitter;
  rec.seed = seed;
  rec.target = slice(utt_t, a0, n_seg);

  Waveform interf = slice(utt_i, cfg.base_audio_start(), n_seg);
  const double rt = rms(rec.target.samples.data(), n_seg);
  const double ri = rms(interf.samples.data(), n_seg);
  if (ri > 1e-9) {
    Rng rng(mix_seed(seed, 3));
    const double snr_db = cfg.snr_spread_db > 0
                              ? rng.uniform(-cfg.snr_spread_db, cfg.snr_spread_db)
                              : 0.0;
    const double gain = rt / ri * std::pow(10.0, -snr_db / 20.0);
    for (double& x : interf.samples) x *= gain;
  }
  rec.mixture = make_mixture(rec.target, interf);

  if (feat.out_dim() != cfg.visual_dim)
    throw std::invalid_argument("make_record: featurizer dim does not match config");
  RowMatrixXd raw = feat.raw_frames(utt_t, cfg.edge_margin, cfg.visual_window_frames());
  if (jitter.active()) raw = apply_jitter(raw, jitter.t, jitter.tau);
  rec.visual = feat.stack_project(raw);
  return rec;
}

RowMatrixXd probe_audio_features(const DataConfig& cfg, const VisualFeaturizer& feat,
                                 const Waveform& target_utterance, int offset, int n_frames) {
  const double a0 = cfg.base_audio_start() + kFrameSec * offset;
  std::vector<double> centers(n_frames);
  for (int i = 0; i < n_frames; ++i) centers[i] = a0 + 0.01 * i + 0.02;
  return feat.features_at(target_utterance, centers);
}

// ---------------------------------------------------------------------------

void write_avf1(const std::string& path, const RowMatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write("AVF1", 4);
  const uint32_t rows = uint32_t(m.rows()), cols = uint32_t(m.cols());
  auto put32 = [&out](uint32_t v) {
    char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff),
                 char(v >> 24 & 0xff)};
    out.write(b, 4);
  };
  put32(rows);
  put32(cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) {
      const float f = float(m(i, j));
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  if (!out) throw std::runtime_error(path + ": write failed");
}

RowMatrixXd read_avf1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "AVF1")
    throw std::runtime_error(path + ": bad magic (want AVF1)");
  auto get32 = [&in]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  };
  const uint32_t rows = get32(), cols = get32();
  RowMatrixXd m(rows, cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      m(i, j) = f;
    }
  if (!in) throw std::runtime_error(path + ": truncated feature data");
  return m;
}

// ---------------------------------------------------------------------------

std::vector<RecordMeta> plan_split(const CorpusConfig& cfg, int split_index, int count,
                                   int speaker_base) {
  std::vector<RecordMeta> out;
  out.reserve(count);
  const int P = cfg.speakers_per_split;
  for (int i = 0; i < count; ++i) {
    const uint64_t rec_seed = mix_seed(mix_seed(cfg.seed, uint64_t(split_index) + 11),
                                       uint64_t(i));
    Rng rng(rec_seed);
    RecordMeta m;
    m.seed = rec_seed;
    m.speaker_target = speaker_base + int(rng.below(uint64_t(P)));
    do {
      m.speaker_interferer = speaker_base + int(rng.below(uint64_t(P)));
    } while (m.speaker_interferer == m.speaker_target);
    m.offset = int(rng.below(uint64_t(2 * cfg.data.offset_range + 1))) - cfg.data.offset_range;
    if (cfg.jitter_prob > 0 && rng.uniform() < cfg.jitter_prob) {
      const int T = cfg.data.visual_window_frames();
      m.jitter.tau = 1 + int(rng.below(8));
      m.jitter.t = 2 + int(rng.below(uint64_t(T - m.jitter.tau - 2)));
    }
    char name[32];
    std::snprintf(name, sizeof name, "rec_%05d", i);
    m.mix_path = std::string(name) + ".mix.wav";
    m.target_path = std::string(name) + ".tgt.wav";
    m.visual_path = std::string(name) + ".avf1";
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

void write_manifest(const std::string& path, const CorpusManifest& man) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  for (const auto& m : man.records) {
    out << m.mix_path << '\t' << m.target_path << '\t' << m.visual_path << '\t'
        << m.speaker_target << '\t' << m.speaker_interferer << '\t' << m.offset << '\t'
        << m.jitter.t << '\t' << m.jitter.tau << '\t' << m.seed << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace

std::string CorpusConfig::to_kv() const {
  std::ostringstream o;
  o << "segment_seconds=" << data.segment_seconds << '\n'
    << "visual_dim=" << data.visual_dim << '\n'
    << "lead_frames=" << data.lead_frames << '\n'
    << "edge_margin=" << data.edge_margin << '\n'
    << "offset_range=" << data.offset_range << '\n'
    << "snr_spread_db=" << data.snr_spread_db << '\n'
    << "n_train=" << n_train << '\n'
    << "n_val=" << n_val << '\n'
    << "n_test=" << n_test << '\n'
    << "speakers_per_split=" << speakers_per_split << '\n'
    << "jitter_prob=" << jitter_prob << '\n'
    << "seed=" << seed << '\n';
  return o.str();
}

CorpusConfig CorpusConfig::from_kv(const std::string& text) {
  CorpusConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("corpus config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "segment_seconds")
      c.data.segment_seconds = std::stod(val);
    else if (key == "visual_dim")
      c.data.visual_dim = std::stoi(val);
    else if (key == "lead_frames")
      c.data.lead_frames = std::stoi(val);
    else if (key == "edge_margin")
      c.data.edge_margin = std::stod(val);
    else if (key == "offset_range")
      c.data.offset_range = std::stoi(val);
    else if (key == "snr_spread_db")
      c.data.snr_spread_db = std::stod(val);
    else if (key == "n_train")
      c.n_train = std::stoi(val);
    else if (key == "n_val")
      c.n_val = std::stoi(val);
    else if (key == "n_test")
      c.n_test = std::stoi(val);
    else if (key == "speakers_per_split")
      c.speakers_per_split = std::stoi(val);
    else if (key == "jitter_prob")
      c.jitter_prob = std::stod(val);
    else if (key == "seed")
      c.seed = std::stoull(val);
    else
      throw std::invalid_argument("corpus config: unknown key '" + key + "'");
  }
  return c;
}

CorpusConfig read_corpus_config(const std::string& corpus_dir) {
  const std::string path = (std::filesystem::path(corpus_dir) / "corpus.cfg").string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open corpus config");
  std::ostringstream buf;
  buf << in.rdbuf();
  return CorpusConfig::from_kv(buf.str());
}

std::vector<CorpusManifest> build_corpus(const std::string& out_dir, const CorpusConfig& cfg) {
  namespace fs = std::filesystem;
  const std::vector<std::pair<std::string, int>> splits = {
      {"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  for (const auto& [name, count] : splits)
    if (count < 1) throw std::invalid_argument("empty split: " + name);

  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(fs::path(out_dir) / "corpus.cfg", std::ios::binary);
    cfg_out << cfg.to_kv();
    if (!cfg_out) throw std::runtime_error(out_dir + ": cannot write corpus.cfg");
  }

  std::vector<CorpusManifest> result;
  for (int s = 0; s < int(splits.size()); ++s) {
    const auto& [name, count] = splits[s];
    CorpusManifest man;
    man.split = name;
    man.dir = (fs::path(out_dir) / name).string();
    fs::create_directories(man.dir);
    man.records = plan_split(cfg, s, count, s * cfg.speakers_per_split);
    // synthesize in parallel chunks, write in index order
    const VisualFeaturizer feat(cfg.data.visual_dim);
    const int jobs = std::max(cfg.jobs, 1);
    const int chunk = std::max(4 * jobs, 1);
    for (size_t begin = 0; begin < man.records.size(); begin += chunk) {
      const size_t end = std::min(begin + chunk, man.records.size());
      std::vector<SampleRecord> recs(end - begin);
      auto work = [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
          const RecordMeta& meta = man.records[begin + i];
          recs[i] = make_record(cfg.data, feat, SyntheticSpeaker::make(meta.speaker_target),
                                SyntheticSpeaker::make(meta.speaker_interferer), meta.offset,
                                meta.jitter, meta.seed);
        }
      };
      if (jobs == 1) {
        work(0, recs.size());
      } else {
        std::vector<std::thread> pool;
        const size_t per = (recs.size() + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
          const size_t lo = std::min(size_t(t) * per, recs.size());
          const size_t hi = std::min(lo + per, recs.size());
          if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
      }
      for (size_t i = 0; i < recs.size(); ++i) {
        const RecordMeta& meta = man.records[begin + i];
        write_wav((fs::path(man.dir) / meta.mix_path).string(), recs[i].mixture);
        write_wav((fs::path(man.dir) / meta.target_path).string(), recs[i].target);
        write_avf1((fs::path(man.dir) / meta.visual_path).string(), recs[i].visual);
      }
    }
    write_manifest((fs::path(man.dir) / "manifest.tsv").string(), man);
    result.push_back(std::move(man));
  }
  return result;
}

CorpusManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open manifest");
  CorpusManifest man;
  man.dir = std::filesystem::path(path).parent_path().string();
  man.split = std::filesystem::path(man.dir).filename().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RecordMeta m;
    std::string jt, jtau, seed;
    if (!(std::getline(ls, m.mix_path, '\t') && std::getline(ls, m.target_path, '\t') &&
          std::getline(ls, m.visual_path, '\t'))) {
      throw std::runtime_error(path + ": malformed line " + std::to_string(lineno));
    }
    std::string f;
    std::getline(ls, f, '\t');
    m.speaker_target = std::stoi(f);
    std::getline(ls, f, '\t');
    m.speaker_interferer = std::stoi(f);
    std::getline(ls, f, '\t');
    m.offset = std::stoi(f);
    std::getline(ls, f, '\t');
    m.jitter.t = std::stoi(f);
    std::getline(ls, f, '\t');
    m.jitter.tau = std::stoi(f);
    std::getline(ls, f, '\t');
    m.seed = std::stoull(f);
    man.records.push_back(std::move(m));
  }
  return man;
}

SampleRecord load_record(const CorpusManifest& manifest, const RecordMeta& meta) {
  namespace fs = std::filesystem;
  SampleRecord rec;
  rec.mixture = read_wav((fs::path(manifest.dir) / meta.mix_path).string());
  rec.target = read_wav((fs::path(manifest.dir) / meta.target_path).string());
  rec.visual = read_avf1((fs::path(manifest.dir) / meta.visual_path).string());
  rec.applied_offset = meta.offset;
  rec.jitter = meta.jitter;
  rec.seed = meta.seed;
  return rec;
}

}  // namespace avsep
