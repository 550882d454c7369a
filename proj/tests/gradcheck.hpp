// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/graph.hpp"
#include "avsep/rng.hpp"

#include <functional>
#include <vector>

namespace avsep::test {

// Central finite differences against the tape. `fn` rebuilds the graph
// from scratch on every call and returns a scalar; inputs are perturbed
// one element at a time (h = 1e-5, 64-bit per the gradient contract).
struct GradCheck {
  using Fn = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;

  static double run(Fn fn, std::vector<Tensor<double>> inputs, double h = 1e-5) {
    auto eval = [&](const std::vector<Tensor<double>>& xs) {
      Graph<double> g;
      std::vector<Var<double>> vars;
      for (const auto& x : xs) vars.push_back(g.input(x));
      return fn(g, vars).val()[0];
    };

    // analytic gradients
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(g.input(x));
    Var<double> loss = fn(g, vars);
    g.backward(loss);
    std::vector<Tensor<double>> analytic;
    for (auto& v : vars)
      analytic.push_back(g.grad_set(v.id) ? g.grad(v.id) : Tensor<double>(v.val().shape()));

    double worst = 0;
    for (size_t t = 0; t < inputs.size(); ++t) {
      for (long i = 0; i < inputs[t].size(); ++i) {
        auto plus = inputs;
        auto minus = inputs;
        plus[t][i] += h;
        minus[t][i] -= h;
        const double numeric = (eval(plus) - eval(minus)) / (2 * h);
        const double a = analytic[t][i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
    return worst;
  }
};

inline Tensor<double> random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Random values bounded away from zero, for ops with kinks there.
inline Tensor<double> random_tensor_offzero(Rng& rng, std::vector<int> shape,
                                            double margin = 0.15) {
  Tensor<double> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) {
    const double m = margin + rng.uniform(0.0, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

}  // namespace avsep::test
