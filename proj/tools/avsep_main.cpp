// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Operator entry point: corpus generation, training, separation,
// evaluation, offset sweeps, and affinity probing.

#include "avsep/evalrun.hpp"
#include "avsep/trainer.hpp"
#include "avsep/wav.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace avsep;

namespace {

void echo_config(const CLI::App& cmd) {
  std::cerr << "config: " << cmd.get_name();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_name().rfind("--", 0) != 0) continue;
    const auto& results = opt->results();
    if (results.empty()) continue;
    std::cerr << ' ' << opt->get_name() << '=';
    for (size_t i = 0; i < results.size(); ++i) std::cerr << (i ? "," : "") << results[i];
  }
  std::cerr << '\n';
}

struct TrainArgs {
  std::string data_dir, out_path, log_path = "train.log";
  std::string variant = "real";
  std::string precision = "f32";
  int channels = 64, visual_depth = 4, audio_depth = 3, decoder_depth = 6;
  double gamma = 1.0, alpha = 1.0, tau = 0.1, tau_row = 1.0;
  double lr = 1e-5;
  int epochs = 10, max_steps = 0;
  uint64_t seed = 0;
};

template <typename S>
int run_train(const TrainArgs& a) {
  const CorpusConfig ccfg = read_corpus_config(a.data_dir);
  ModelConfig mcfg;
  mcfg.variant = a.variant == "complex" ? Variant::kComplex : Variant::kReal;
  mcfg.channels = a.channels;
  mcfg.visual_in_dim = ccfg.data.visual_dim;
  mcfg.visual_enc_depth = a.visual_depth;
  mcfg.audio_enc_depth = a.audio_depth;
  mcfg.decoder_depth = a.decoder_depth;
  mcfg.offset_range = ccfg.data.offset_range;
  mcfg.gamma = a.gamma;
  mcfg.alpha = a.alpha;
  mcfg.tau = a.tau;
  mcfg.tau_row = a.tau_row;

  const CorpusManifest train_man =
      read_manifest((fs::path(a.data_dir) / "train" / "manifest.tsv").string());
  const CorpusManifest val_man =
      read_manifest((fs::path(a.data_dir) / "val" / "manifest.tsv").string());

  Model<S> model(mcfg, a.seed);
  TrainOptions opt;
  opt.lr = a.lr;
  opt.epochs = a.epochs;
  opt.max_steps = a.max_steps;
  opt.seed = a.seed;
  opt.checkpoint_path = a.out_path;

  std::ofstream log(a.log_path, std::ios::binary);
  if (!log) {
    std::cerr << "error: cannot open log file " << a.log_path << '\n';
    return 1;
  }
  log << "# variant=" << a.variant << " channels=" << a.channels << " lr=" << a.lr
      << " epochs=" << a.epochs << " max_steps=" << a.max_steps << " seed=" << a.seed
      << " gamma=" << a.gamma << " precision=" << a.precision << '\n';

  const TrainStats stats = train_model(model, train_man, val_man, opt, std::cout, &log);
  std::cout << "trained " << stats.steps << " steps, best val " << stats.best_val
            << ", checkpoint " << a.out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual speech separation with cross-modal affinity"};
  app.require_subcommand(1);
  app.set_config("--config")->description("UTF-8 key=value config file");
  app.allow_config_extras(false);

  // ---- gen-data -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "synthesize a paired corpus");
  std::string gen_out = "corpus";
  CorpusConfig ccfg;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--train", ccfg.n_train, "training records");
  gen->add_option("--val", ccfg.n_val, "validation records");
  gen->add_option("--test", ccfg.n_test, "test records");
  gen->add_option("--speakers", ccfg.speakers_per_split, "speakers per split");
  gen->add_option("--segment", ccfg.data.segment_seconds, "segment length, seconds");
  gen->add_option("--visual-dim", ccfg.data.visual_dim, "visual feature dimension");
  gen->add_option("--snr-spread", ccfg.data.snr_spread_db, "mixing ratio spread, dB");
  gen->add_option("--jitter-prob", ccfg.jitter_prob, "per-record jitter probability");
  gen->add_option("--seed", ccfg.seed, "corpus seed");
  gen->add_option("--jobs", ccfg.jobs, "worker threads");

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a separation model");
  TrainArgs ta;
  train->add_option("--data", ta.data_dir, "corpus directory")->required();
  train->add_option("--out", ta.out_path, "checkpoint path")->required();
  train->add_option("--log", ta.log_path, "loss log file");
  train->add_option("--variant", ta.variant, "real | complex")
      ->check(CLI::IsMember({"real", "complex"}));
  train->add_option("--precision", ta.precision, "f32 | f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  train->add_option("--channels", ta.channels, "feature channels C");
  train->add_option("--visual-depth", ta.visual_depth, "visual encoder depth");
  train->add_option("--audio-depth", ta.audio_depth, "audio encoder depth");
  train->add_option("--decoder-depth", ta.decoder_depth, "mask decoder depth");
  train->add_option("--gamma", ta.gamma, "affinity regularization weight");
  train->add_option("--alpha", ta.alpha, "SI-SDR weight (complex)");
  train->add_option("--tau", ta.tau, "offset posterior temperature");
  train->add_option("--tau-row", ta.tau_row, "affinity row softmax temperature");
  train->add_option("--lr", ta.lr, "Adam learning rate");
  train->add_option("--epochs", ta.epochs, "epoch count");
  train->add_option("--max-steps", ta.max_steps, "stop after this many steps (0 = off)");
  train->add_option("--seed", ta.seed, "training seed");

  // ---- separate -----------------------------------------------------------
  auto* sep = app.add_subcommand("separate", "enhance one mixture");
  std::string sep_ckpt, sep_mix, sep_vis, sep_out, sep_dump;
  sep->add_option("--checkpoint", sep_ckpt, "model checkpoint")->required();
  sep->add_option("--mix", sep_mix, "mixture wav")->required();
  sep->add_option("--visual", sep_vis, "visual features (AVF1)")->required();
  sep->add_option("--out", sep_out, "output wav")->required();
  sep->add_option("--dump-affinity", sep_dump, "prefix for affinity CSV + PGM dumps");

  // ---- eval ---------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate on a corpus split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report = "eval.csv";
  bool ev_passthrough = false, ev_probe = false;
  int ev_offset = std::numeric_limits<int>::min();
  int ev_jobs = 1;
  eval->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  eval->add_option("--data", ev_data, "corpus directory")->required();
  eval->add_option("--split", ev_split, "corpus split");
  eval->add_option("--report", ev_report, "output CSV");
  eval->add_option("--offset", ev_offset, "force this offset (regenerates records)");
  eval->add_flag("--passthrough", ev_passthrough, "identity system: output = mixture");
  eval->add_flag("--probe-offsets", ev_probe, "estimate offsets with the raw featurizer");
  eval->add_option("--jobs", ev_jobs, "worker threads");

  // ---- sweep --------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "evaluate across delay offsets");
  std::string sw_ckpt, sw_data, sw_split = "test", sw_report = "sweep.csv";
  std::string sw_offsets_arg;
  int sw_jobs = 1;
  sweep->add_option("--checkpoint", sw_ckpt, "model checkpoint")->required();
  sweep->add_option("--data", sw_data, "corpus directory")->required();
  sweep->add_option("--split", sw_split, "corpus split");
  sweep->add_option("--report", sw_report, "output CSV");
  sweep->add_option("--offsets", sw_offsets_arg,
                    "comma-separated offsets (default -range..+range)");
  sweep->add_option("--jobs", sw_jobs, "worker threads");

  // ---- probe-affinity -----------------------------------------------------
  auto* probe = app.add_subcommand("probe-affinity",
                                   "featurizer-level affinity and offset probes");
  std::string pr_data, pr_split = "test", pr_dump;
  int pr_index = 0, pr_offset = 0, pr_jt = 0, pr_jtau = 0, pr_spk = 0;
  uint64_t pr_seed = 7;
  bool pr_synthetic = false;
  probe->add_option("--data", pr_data, "corpus directory (probe a stored record)");
  probe->add_option("--split", pr_split, "corpus split");
  probe->add_option("--index", pr_index, "record index in the manifest");
  probe->add_flag("--synthetic", pr_synthetic, "construct a probe record in memory");
  probe->add_option("--offset", pr_offset, "applied offset for the synthetic record");
  probe->add_option("--jitter-t", pr_jt, "jitter start frame (1-based)");
  probe->add_option("--jitter-tau", pr_jtau, "jitter length, frames");
  probe->add_option("--speaker", pr_spk, "synthetic speaker id");
  probe->add_option("--seed", pr_seed, "synthetic record seed");
  probe->add_option("--dump", pr_dump, "prefix for affinity CSV + PGM dumps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      echo_config(*gen);
      const auto manifests = build_corpus(gen_out, ccfg);
      for (const auto& m : manifests)
        std::cout << m.split << ": " << m.records.size() << " records, manifest "
                  << (fs::path(m.dir) / "manifest.tsv").string() << '\n';
      return 0;
    }

    if (*train) {
      echo_config(*train);
      return ta.precision == "f64" ? run_train<double>(ta) : run_train<float>(ta);
    }

    if (*sep) {
      echo_config(*sep);
      const Waveform mix = read_wav(sep_mix);
      const RowMatrixXd visual = read_avf1(sep_vis);
      Model<float> model = Model<float>::load_checkpoint(sep_ckpt);
      const Separation<float> res = separate(model, mix, visual);
      write_wav(sep_out, res.enhanced);
      std::cout << "wrote " << sep_out << " (" << res.enhanced.size()
                << " samples), estimated offset " << res.est_offset << '\n';
      if (!sep_dump.empty()) {
        affinity_to_csv(sep_dump + ".csv", res.affinity);
        affinity_to_pgm(sep_dump + ".pgm", res.affinity);
        std::cout << "wrote " << sep_dump << ".csv and " << sep_dump << ".pgm\n";
      }
      return 0;
    }

    if (*eval) {
      echo_config(*eval);
      const CorpusConfig cc = read_corpus_config(ev_data);
      const CorpusManifest man =
          read_manifest((fs::path(ev_data) / ev_split / "manifest.tsv").string());
      EvalOptions opt;
      opt.passthrough = ev_passthrough;
      opt.probe_offsets = ev_probe;
      opt.jobs = ev_jobs;
      if (ev_offset != std::numeric_limits<int>::min()) opt.forced_offset = ev_offset;
      EvalReport rep;
      if (ev_passthrough && ev_ckpt.empty()) {
        rep = evaluate_corpus<float>(nullptr, man, cc.data, opt);
      } else {
        if (ev_ckpt.empty()) {
          std::cerr << "error: --checkpoint is required unless --passthrough is set\n";
          return 1;
        }
        Model<float> model = Model<float>::load_checkpoint(ev_ckpt);
        rep = evaluate_corpus(&model, man, cc.data, opt);
      }
      std::ofstream out(ev_report, std::ios::binary);
      rep.to_csv(out);
      std::cout << "mean si_sdri " << rep.mean_si_sdri() << " dB over " << rep.rows.size()
                << " records, offset accuracy " << rep.offset_accuracy() << ", report "
                << ev_report << '\n';
      return 0;
    }

    if (*sweep) {
      echo_config(*sweep);
      const CorpusConfig cc = read_corpus_config(sw_data);
      const CorpusManifest man =
          read_manifest((fs::path(sw_data) / sw_split / "manifest.tsv").string());
      std::vector<int> sw_offsets;
      if (sw_offsets_arg.empty()) {
        for (int o = -cc.data.offset_range; o <= cc.data.offset_range; ++o)
          sw_offsets.push_back(o);
      } else {
        std::istringstream ss(sw_offsets_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) sw_offsets.push_back(std::stoi(tok));
      }
      Model<float> model = Model<float>::load_checkpoint(sw_ckpt);
      const auto rows = sweep_offsets(model, man, cc.data, sw_offsets, sw_jobs);
      std::ofstream out(sw_report, std::ios::binary);
      sweep_to_csv(out, rows);
      sweep_to_csv(std::cout, rows);
      return 0;
    }

    if (*probe) {
      echo_config(*probe);
      DataConfig dcfg;
      RecordMeta meta;
      RowMatrixXd visual;
      int true_offset = 0;
      JitterSpec jit;
      if (pr_synthetic || pr_data.empty()) {
        jit = {pr_jt, pr_jtau};
        dcfg = DataConfig{};
        meta.speaker_target = pr_spk;
        meta.speaker_interferer = pr_spk + 1;
        meta.seed = pr_seed;
        meta.offset = pr_offset;
        const VisualFeaturizer feat(dcfg.visual_dim);
        const SampleRecord rec =
            make_record(dcfg, feat, SyntheticSpeaker::make(meta.speaker_target),
                        SyntheticSpeaker::make(meta.speaker_interferer), pr_offset, jit,
                        pr_seed);
        visual = rec.visual;
        true_offset = pr_offset;
      } else {
        const CorpusConfig cc = read_corpus_config(pr_data);
        dcfg = cc.data;
        const CorpusManifest man =
            read_manifest((fs::path(pr_data) / pr_split / "manifest.tsv").string());
        if (pr_index < 0 || pr_index >= int(man.records.size())) {
          std::cerr << "error: record index out of range\n";
          return 1;
        }
        meta = man.records[pr_index];
        const SampleRecord rec = load_record(man, meta);
        visual = rec.visual;
        true_offset = meta.offset;
        jit = meta.jitter;
      }

      const VisualFeaturizer feat(dcfg.visual_dim);
      const Waveform utt = record_target_utterance(
          dcfg, SyntheticSpeaker::make(meta.speaker_target), meta.seed);
      const StftConfig scfg;
      const int n = stft_frames(int(std::lround(dcfg.segment_seconds * 16000.0)), scfg);
      const RowMatrixXd s = probe_audio_features(dcfg, feat, utt, true_offset, n);
      const RowMatrixXd A = affinity_matrix(s, visual);
      const auto masks =
          build_diagonal_masks(int(A.rows()), int(A.cols()), 4, dcfg.offset_range);

      std::cout << "true offset " << true_offset << ", estimated "
                << estimate_offset(A, masks) << '\n';
      if (jit.active()) {
        const auto [pre_end, post_begin] =
            jitter_probe_ranges(jit, true_offset, dcfg.lead_frames, n);
        const int pre = estimate_offset(A, masks, 0, pre_end);
        const int post = estimate_offset(A, masks, post_begin, n);
        std::cout << "jitter t=" << jit.t << " tau=" << jit.tau << ": pre-jitter estimate "
                  << pre << ", post-jitter estimate " << post << " (difference "
                  << post - pre << ")\n";
      }
      if (!pr_dump.empty()) {
        affinity_to_csv(pr_dump + ".csv", A);
        affinity_to_pgm(pr_dump + ".pgm", A);
        std::cout << "wrote " << pr_dump << ".csv and " << pr_dump << ".pgm\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
