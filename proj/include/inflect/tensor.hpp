#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "inflect/errors.hpp"

namespace inflect {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Eigen::MatrixXd;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional gradient buffer of the same length.
///
/// `matrix()` views the buffer as a 2-D matrix whose columns are the last
/// dimension and whose rows collapse every leading dimension. Most ops work on
/// that view.
template <typename Scalar>
class BasicTensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), values_(Vector<Scalar>::Zero(shape_size(shape_))) {}

  BasicTensor(Shape shape, Vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size()) {
      throw InvalidInput("tensor: shape " + shape_string(shape_) + " does not match " +
                         std::to_string(values_.size()) + " values");
    }
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor({1}, Vector<Scalar>::Constant(1, v)); }

  static BasicTensor from_matrix(const Eigen::Ref<const RowMatrix<Scalar>>& m) {
    BasicTensor t({m.rows(), m.cols()});
    t.matrix() = m;
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  Index size() const { return values_.size(); }
  Index cols() const { return shape_.empty() ? 1 : shape_.back(); }
  Index rows() const { return cols() == 0 ? 0 : size() / cols(); }

  Vector<Scalar>& values() { return values_; }
  const Vector<Scalar>& values() const { return values_; }
  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  MatrixMap matrix() { return MatrixMap(values_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(values_.data(), rows(), cols()); }

  bool has_grad() const { return grad_.has_value(); }
  Vector<Scalar>& grad() {
    if (!grad_) throw StateError("tensor: gradient buffer absent");
    return *grad_;
  }
  const Vector<Scalar>& grad() const {
    if (!grad_) throw StateError("tensor: gradient buffer absent");
    return *grad_;
  }
  MatrixMap grad_matrix() { return MatrixMap(grad().data(), rows(), cols()); }
  ConstMatrixMap grad_matrix() const { return ConstMatrixMap(grad().data(), rows(), cols()); }

  /// Allocates a zero gradient buffer if none exists.
  Vector<Scalar>& ensure_grad() {
    if (!grad_) grad_ = Vector<Scalar>::Zero(values_.size());
    return *grad_;
  }
  void zero_grad() {
    if (grad_) grad_->setZero();
  }
  void drop_grad() { grad_.reset(); }

  void reshape(Shape shape) {
    if (shape_size(shape) != size()) {
      throw InvalidInput("tensor: cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  bool all_finite() const { return values_.size() == 0 || (values_.array() * Scalar(0)).sum() == Scalar(0); }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && values_.size() == other.values_.size() &&
           std::equal(values_.data(), values_.data() + values_.size(), other.values_.data());
  }

 private:
  Shape shape_{0};
  Vector<Scalar> values_;
  std::optional<Vector<Scalar>> grad_;
};

using Tensor = BasicTensor<double>;

/// FNV-1a over the raw bytes of the values; used for frozen-parameter checks.
std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace inflect
