#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "steerkit/errors.hpp"

namespace steerkit {

using Shape = std::vector<int>;

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw DimError("tensor shape has non-positive extent " + shape_to_string(s));
    n *= e;
  }
  return n;
}

/// Dense n-dimensional array with row-major logical layout, templated on the
/// scalar so the same kernels run in float for training and in double for the
/// finite-difference harness. Storage is an Eigen column vector; `array()`
/// exposes it for expression-style elementwise work.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw DimError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Tensor t(std::move(shape));
    if (static_cast<std::int64_t>(values.size()) != t.size()) {
      throw DimError("initializer length does not match shape " + shape_to_string(t.shape_));
    }
    std::int64_t i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  std::int64_t size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Storage& vec() { return data_; }
  const Storage& vec() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  Scalar& operator[](std::int64_t i) { return data_[i]; }
  Scalar operator[](std::int64_t i) const { return data_[i]; }

  // NCHW accessor.
  Scalar& operator()(int n, int c, int h, int w) { return data_[flat4(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[flat4(n, c, h, w)]; }

  // Matrix accessor.
  Scalar& operator()(int r, int c) { return data_[static_cast<std::int64_t>(r) * shape_[1] + c]; }
  Scalar operator()(int r, int c) const { return data_[static_cast<std::int64_t>(r) * shape_[1] + c]; }

  std::int64_t flat4(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw DimError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace steerkit
