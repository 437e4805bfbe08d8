#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "lpvae/core/errors.hpp"
#include "lpvae/core/rng.hpp"

namespace lpvae {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

using ArrayXd = Eigen::ArrayXd;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

// Dense double tensor with row-major logical layout. Index (b, c, i, j) maps
// to ((b*C + c)*H + i)*W + j. All network math runs in double.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), d_(ArrayXd::Zero(shape_numel(shape_))) {}
  Tensor(Shape shape, ArrayXd data) : shape_(std::move(shape)), d_(std::move(data)) {
    if (d_.size() != shape_numel(shape_)) throw ContractError("tensor: data size does not match shape");
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.d_ = ArrayXd::Constant(shape_numel(t.shape_), v);
    return t;
  }
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.d_[i] = stddev * rng.normal();
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  int64_t numel() const { return d_.size(); }
  bool empty() const { return d_.size() == 0; }

  ArrayXd& array() { return d_; }
  const ArrayXd& array() const { return d_; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  double& operator[](int64_t i) { return d_[i]; }
  double operator[](int64_t i) const { return d_[i]; }

  // 2-D views; the tensor must have exactly rows*cols elements.
  MatMap mat(int64_t rows, int64_t cols) {
    if (rows * cols != numel()) throw ContractError("tensor: bad matrix view");
    return MatMap(d_.data(), rows, cols);
  }
  ConstMatMap mat(int64_t rows, int64_t cols) const {
    if (rows * cols != numel()) throw ContractError("tensor: bad matrix view");
    return ConstMatMap(d_.data(), rows, cols);
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel()) throw ContractError("tensor: reshape changes element count");
    return Tensor(std::move(s), d_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  ArrayXd d_;
};

}  // namespace lpvae
