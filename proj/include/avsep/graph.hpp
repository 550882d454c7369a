// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/tensor.hpp"

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace avsep {

/// Named learnable (or stateful) tensor. Storage persists across
/// training steps; gradients accumulate until zero_grad.
template <typename Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool trainable = true;
};

template <typename Scalar>
class ParamStore {
 public:
  Param<Scalar>& add(const std::string& name, Tensor<Scalar> value, bool trainable = true) {
    if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    auto p = std::make_unique<Param<Scalar>>();
    p->name = name;
    p->grad = Tensor<Scalar>(value.shape());
    p->value = std::move(value);
    p->trainable = trainable;
    by_name_[name] = p.get();
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Param<Scalar>& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return *it->second;
  }
  const Param<Scalar>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  std::vector<Param<Scalar>*> all() {
    std::vector<Param<Scalar>*> out;
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }
  std::vector<Param<Scalar>*> trainable() {
    std::vector<Param<Scalar>*> out;
    for (auto& p : items_)
      if (p->trainable) out.push_back(p.get());
    return out;
  }

  void zero_grad() {
    for (auto& p : items_) p->grad.zero();
  }

  long total_size() const {
    long n = 0;
    for (auto& p : items_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param<Scalar>>> items_;  // insertion order
  std::map<std::string, Param<Scalar>*> by_name_;
};

template <typename Scalar>
class Graph;

/// Handle to a node in a Graph's tape.
template <typename Scalar>
struct Var {
  Graph<Scalar>* g = nullptr;
  int id = -1;

  Tensor<Scalar>& val() const;
  const std::vector<int>& shape() const { return val().shape(); }
  bool requires_grad() const;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// creation order is a topological order; backward walks it in reverse.
template <typename Scalar>
class Graph {
 public:
  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant leaf; never receives gradient.
  Var<Scalar> value(Tensor<Scalar> v) { return {this, add_node(std::move(v), false)}; }

  /// Differentiable leaf whose gradient stays on the tape (inputs in tests).
  Var<Scalar> input(Tensor<Scalar> v) { return {this, add_node(std::move(v), true)}; }

  /// Leaf bound to external parameter storage; backward accumulates into p.grad.
  Var<Scalar> param(Param<Scalar>& p) {
    int id = add_node(p.value, true);
    Param<Scalar>* pp = &p;
    nodes_[id].backward = [this, id, pp]() { pp->grad.vec() += grad(id).vec(); };
    return {this, id};
  }

  int add_node(Tensor<Scalar> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Tensor<Scalar>(), requires_grad, false, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int id, std::function<void()> fn) { nodes_[id].backward = std::move(fn); }

  Tensor<Scalar>& val(int id) { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient of a node; must have been touched during backward.
  Tensor<Scalar>& grad(int id) {
    if (!nodes_[id].grad_set) throw std::logic_error("gradient not populated");
    return nodes_[id].grad;
  }

  /// Gradient accumulator, allocating zeros on first touch.
  Tensor<Scalar>& grad_acc(int id) {
    Node& n = nodes_[id];
    if (!n.grad_set) {
      n.grad = Tensor<Scalar>(n.value.shape());
      n.grad_set = true;
    }
    return n.grad;
  }

  bool grad_set(int id) const { return nodes_[id].grad_set; }

  /// Reverse pass from a scalar loss. Gradients of parameters accumulate
  /// into their stores; call ParamStore::zero_grad between steps.
  void backward(Var<Scalar> loss) {
    if (loss.g != this) throw std::invalid_argument("loss belongs to another graph");
    if (val(loss.id).size() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got " +
                                  shape_str(val(loss.id).shape()));
    grad_acc(loss.id)[0] = Scalar(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad_set && n.backward) n.backward();
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    bool grad_set = false;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
};

template <typename Scalar>
Tensor<Scalar>& Var<Scalar>::val() const {
  return g->val(id);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return g->requires_grad(id);
}

/// Complex value as a pair of real tapes.
template <typename Scalar>
struct CVar {
  Var<Scalar> re, im;
};

namespace detail {

template <typename Scalar>
inline Graph<Scalar>& same_graph(Var<Scalar> a, Var<Scalar> b) {
  if (a.g != b.g) throw std::invalid_argument("operands belong to different graphs");
  return *a.g;
}

template <typename Scalar>
inline void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace detail

}  // namespace avsep
