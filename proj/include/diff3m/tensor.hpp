#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "diff3m/errors.hpp"

namespace diff3m {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

std::string to_string(const Shape& shape);

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major n-dimensional array. Storage is a contiguous Eigen array so
// elementwise work can be written as Eigen expressions on array(), and rank-2
// data can be viewed as a row-major matrix without copying.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    check_dims();
    data_ = Storage::Zero(shape_size(shape_));
  }

  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor of shape " + to_string(shape_) + " cannot hold " +
                       std::to_string(data_.size()) + " values");
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Storage(Eigen::Map<const Storage>(
                                          values.begin(), static_cast<Index>(values.size())))) {}

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }
  static BasicTensor ones(Shape shape) { return constant(std::move(shape), Scalar(1)); }
  static BasicTensor scalar(Scalar value) { return constant({1}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& at(Index i, Index j) { return data_[i * shape_[1] + j]; }
  Scalar at(Index i, Index j) const { return data_[i * shape_[1] + j]; }
  Scalar& at(Index n, Index c, Index h, Index w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar at(Index n, Index c, Index h, Index w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Rank-2 view as a row-major matrix.
  MatrixMap matrix() {
    require_rank(2);
    return MatrixMap(data_.data(), shape_[0], shape_[1]);
  }
  ConstMatrixMap matrix() const {
    require_rank(2);
    return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename NewScalar>
  BasicTensor<NewScalar> cast() const {
    return BasicTensor<NewScalar>(shape_, data_.template cast<NewScalar>());
  }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && (data_ == other.data_).all();
  }

 private:
  void check_dims() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }
  void require_rank(int r) const {
    if (rank() != r) {
      throw ShapeError("expected rank " + std::to_string(r) + ", got shape " + to_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;
using Tensor32 = BasicTensor<float>;

/// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Shape& a, const Shape& b, const char* op);

bool all_finite(const Tensor& t);

// Forward kernels on plain tensors. The autodiff layer calls these and adds
// the matching backward rules; they are also used directly on inference paths.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Stride-1 zero-padded "same" convolution. x: [N,C,H,W], w: [O,C,k,k] with k
/// odd, bias: [O] or empty.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias);
/// Gradient of conv2d with respect to x.
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w);
/// Gradient of conv2d with respect to w (and bias when requested).
void conv2d_grad_params(const Tensor& grad_out, const Tensor& x, Tensor& grad_w, Tensor* grad_b);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_grad(const Tensor& grad_out, const Shape& input_shape);
Tensor upsample2(const Tensor& x);
Tensor upsample2_grad(const Tensor& grad_out, const Shape& input_shape);

/// Softmax along `axis` of a tensor of any rank.
Tensor softmax(const Tensor& x, int axis);

Tensor concat(const std::vector<const Tensor*>& parts, int axis);

}  // namespace kernels
}  // namespace diff3m
