// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace avsep {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::string shape_str(const std::vector<int>& shape) {
  if (shape.empty()) return "[scalar]";
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major N-d array. Rank is at most 3 in this project
/// (conv weights are Cout x Cin x K, activations are T x C).
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), Scalar(0));
  }
  Tensor(std::vector<int> shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<long>(data_.size()) != count(shape_))
      throw std::invalid_argument("tensor data does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }
  static Tensor from_matrix(const RowMat<Scalar>& m) {
    Tensor t({int(m.rows()), int(m.cols())});
    t.mat() = m;
    return t;
  }
  static Tensor from_vector(const VecX<Scalar>& v) {
    Tensor t({int(v.size())});
    t.vec() = v;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  long size() const { return static_cast<long>(data_.size()); }
  int dim(int i) const { return shape_[i]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](long i) { return data_[i]; }
  Scalar operator[](long i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  int rows() const {
    require_rank(2);
    return shape_[0];
  }
  int cols() const {
    require_rank(2);
    return shape_[1];
  }

  Eigen::Map<RowMat<Scalar>> mat() {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }
  Eigen::Map<const RowMat<Scalar>> mat() const {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }
  Eigen::Map<VecX<Scalar>> vec() { return {data_.data(), long(data_.size())}; }
  Eigen::Map<const VecX<Scalar>> vec() const { return {data_.data(), long(data_.size())}; }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(Scalar(0)); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (long i = 0; i < size(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

  static long count(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("negative dimension in " + shape_str(shape));
      n *= d;
    }
    return n;
  }

 private:
  void require_rank(int r) const {
    if (rank() != r)
      throw std::logic_error("tensor " + shape_str(shape_) + " used as rank-" +
                             std::to_string(r));
  }

  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

}  // namespace avsep
