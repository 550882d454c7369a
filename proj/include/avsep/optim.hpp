// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/graph.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace avsep {

/// Adam with bias correction plus a reduce-on-plateau schedule
/// (factor 0.8 after `patience` epochs without val-loss improvement).
template <typename Scalar>
class Adam {
 public:
  explicit Adam(ParamStore<Scalar>& store, Scalar lr = Scalar(1e-5))
      : lr_(lr), params_(store.trainable()) {
    for (auto* p : params_)
      slots_.push_back({Tensor<Scalar>(p->value.shape()), Tensor<Scalar>(p->value.shape())});
  }

  Scalar lr() const { return lr_; }
  void set_lr(Scalar lr) { lr_ = lr; }
  int step_count() const { return t_; }

  void step() {
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1, Scalar(t_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2, Scalar(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<Scalar>& p = *params_[i];
      Tensor<Scalar>& m = slots_[i].m;
      Tensor<Scalar>& v = slots_[i].v;
      for (long j = 0; j < p.value.size(); ++j) {
        const Scalar g = p.grad[j];
        m[j] = beta1 * m[j] + (Scalar(1) - beta1) * g;
        v[j] = beta2 * v[j] + (Scalar(1) - beta2) * g * g;
        const Scalar mhat = m[j] / bc1;
        const Scalar vhat = v[j] / bc2;
        p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  /// Returns true when the learning rate was reduced this epoch.
  bool plateau_update(Scalar val_loss) {
    if (val_loss < best_val_) {
      best_val_ = val_loss;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience) {
      lr_ *= plateau_factor;
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Scalar plateau_factor = Scalar(0.8);
  int patience = 2;

 private:
  struct Slot {
    Tensor<Scalar> m, v;
  };

  Scalar lr_;
  int t_ = 0;
  Scalar best_val_ = std::numeric_limits<Scalar>::infinity();
  int bad_epochs_ = 0;
  std::vector<Param<Scalar>*> params_;
  std::vector<Slot> slots_;
};

}  // namespace avsep
