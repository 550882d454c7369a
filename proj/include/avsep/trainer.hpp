// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/optim.hpp"
#include "avsep/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace avsep {

struct TrainOptions {
  double lr = 1e-5;
  int epochs = 10;
  int max_steps = 0;  // 0 = epoch-bounded only
  uint64_t seed = 0;
  std::string checkpoint_path;  // best-val model written here when set
};

struct TrainStats {
  int steps = 0;
  double best_val = 0;
  std::vector<std::pair<double, double>> epoch_losses;  // (train, val)
};

/// One-record-per-step training with Adam and the plateau schedule.
/// Loss lines go to `out` (mirrored into a caller-managed log stream if
/// given); a non-finite loss aborts, naming the step.
template <typename S>
TrainStats train_model(Model<S>& model, const CorpusManifest& train,
                       const CorpusManifest& val, const TrainOptions& opt, std::ostream& out,
                       std::ostream* log = nullptr) {
  Adam<S> adam(model.params(), S(opt.lr));
  Rng rng(mix_seed(opt.seed, 0x7261'696e));
  std::vector<int> order(train.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  TrainStats stats;
  double best_val = std::numeric_limits<double>::infinity();
  char line[160];
  bool done = false;
  for (int epoch = 1; epoch <= opt.epochs && !done; ++epoch) {
    // Fisher-Yates, backed by our own generator for cross-run stability
    for (int i = int(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(uint64_t(i + 1))]);

    double train_sum = 0;
    int train_count = 0;
    for (int idx : order) {
      const SampleRecord rec = load_record(train, train.records[idx]);
      Graph<S> g;
      Var<S> loss = record_loss(model, g, rec, /*training=*/true);
      const double lv = double(loss.val()[0]);
      if (!std::isfinite(lv))
        throw std::runtime_error("non-finite loss at step " + std::to_string(stats.steps + 1) +
                                 " (epoch " + std::to_string(epoch) + ", record " +
                                 train.records[idx].mix_path + ")");
      model.params().zero_grad();
      g.backward(loss);
      adam.step();
      train_sum += lv;
      ++train_count;
      ++stats.steps;
      if (opt.max_steps > 0 && stats.steps >= opt.max_steps) {
        done = true;
        break;
      }
    }

    double val_sum = 0;
    for (const auto& meta : val.records) {
      const SampleRecord rec = load_record(val, meta);
      Graph<S> g;
      val_sum += double(record_loss(model, g, rec, /*training=*/false).val()[0]);
    }
    const double train_loss = train_sum / std::max(train_count, 1);
    const double val_loss = val_sum / std::max(int(val.records.size()), 1);
    stats.epoch_losses.emplace_back(train_loss, val_loss);

    std::snprintf(line, sizeof line, "epoch %d steps %d train %.8e val %.8e lr %.6e\n", epoch,
                  stats.steps, train_loss, val_loss, double(adam.lr()));
    out << line;
    out.flush();
    if (log) {
      *log << line;
      log->flush();
    }

    if (val_loss < best_val) {
      best_val = val_loss;
      if (!opt.checkpoint_path.empty()) model.save_checkpoint(opt.checkpoint_path);
    }
    adam.plateau_update(S(val_loss));
  }
  stats.best_val = best_val;
  return stats;
}

}  // namespace avsep
