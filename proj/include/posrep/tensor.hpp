#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace posrep {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(std::span<const Index> shape);

// Dense row-major tensor. Storage is a matrix whose column count is the last
// dimension and whose row count is the product of the leading dimensions, so
// every tensor can be handed to Eigen as a 2-D block without copies.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    check_shape();
    values_ = Matrix<Scalar>::Zero(leading(), shape_.back());
  }

  Tensor(std::vector<Index> shape, Matrix<Scalar> values) : shape_(std::move(shape)) {
    check_shape();
    if (values.size() != size()) {
      throw ShapeError("tensor data has " + std::to_string(values.size()) +
                       " values, shape " + shape_string(shape_) + " needs " +
                       std::to_string(size()));
    }
    values.resize(leading(), shape_.back());
    values_ = std::move(values);
  }

  static Tensor from_matrix(Matrix<Scalar> m) {
    const Index r = m.rows();
    const Index c = m.cols();
    return Tensor({r, c}, std::move(m));
  }

  const std::vector<Index>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Index size() const {
    return std::accumulate(shape_.begin(), shape_.end(), Index{1}, std::multiplies<>());
  }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  Matrix<Scalar>& matrix() { return values_; }
  const Matrix<Scalar>& matrix() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  std::span<const Scalar> values() const { return {values_.data(), static_cast<std::size_t>(values_.size())}; }

  bool has_grad() const { return grad_.size() != 0; }
  Matrix<Scalar>& grad() {
    if (!has_grad()) grad_ = Matrix<Scalar>::Zero(values_.rows(), values_.cols());
    return grad_;
  }
  const Matrix<Scalar>& grad() const { return grad_; }
  void zero_grad() {
    if (has_grad()) grad_.setZero();
  }
  void drop_grad() { grad_.resize(0, 0); }

  bool all_finite() const { return values_.allFinite(); }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, values_.template cast<To>());
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Index leading() const {
    return std::accumulate(shape_.begin(), shape_.end() - 1, Index{1}, std::multiplies<>());
  }
  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (const Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_string(shape_));
    }
  }

  std::vector<Index> shape_;
  Matrix<Scalar> values_;
  Matrix<Scalar> grad_;
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>>;

inline std::string shape_string(std::span<const Index> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace posrep
