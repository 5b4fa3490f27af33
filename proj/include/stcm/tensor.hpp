#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "stcm/errors.hpp"

namespace stcm {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline constexpr std::size_t kMaxRank = 8;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Throws ShapeError unless 1 <= rank <= kMaxRank and every extent >= 1.
void check_shape(const Shape& shape);

/// Dense row-major array of rank 1..8.
///
/// A default-constructed tensor is the null tensor (rank 0, no data); it stands in for
/// absent optional parameters such as a missing bias and fails every shape check.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Constant(shape_product(shape_), fill);
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_shape(shape_);
    if (static_cast<Index>(values.size()) != shape_product(shape_)) {
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_to_string(shape_));
    }
    data_.resize(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), data_.data());
  }

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_product(shape_)) {
      throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not match shape " +
                       shape_to_string(shape_));
    }
  }

  static BasicTensor filled(Shape shape, Scalar value) { return BasicTensor(std::move(shape), value); }
  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), Scalar(0)); }
  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_, Scalar(0)); }

  bool is_null() const { return shape_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Index extent(std::size_t axis) const { return shape_.at(axis); }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar* begin() { return data_.data(); }
  Scalar* end() { return data_.data() + data_.size(); }
  const Scalar* begin() const { return data_.data(); }
  const Scalar* end() const { return data_.data() + data_.size(); }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }

  /// Row-major matrix view with `rows` rows over the whole buffer.
  MatrixMap matrix(Index rows) {
    check_rows(rows);
    return MatrixMap(data_.data(), rows, size() / rows);
  }
  ConstMatrixMap matrix(Index rows) const {
    check_rows(rows);
    return ConstMatrixMap(data_.data(), rows, size() / rows);
  }
  /// View as [extent(0), size / extent(0)].
  MatrixMap rows() { return matrix(shape_.at(0)); }
  ConstMatrixMap rows() const { return matrix(shape_.at(0)); }

  Scalar& operator[](Index flat) { return data_[flat]; }
  Scalar operator[](Index flat) const { return data_[flat]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[offset({static_cast<Index>(ix)...})];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return data_[offset({static_cast<Index>(ix)...})];
  }

  Index offset(std::initializer_list<Index> ix) const {
    Index flat = 0;
    std::size_t axis = 0;
    for (Index i : ix) flat = flat * shape_[axis++] + i;
    return flat;
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_product(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  /// Copy of rows [begin, begin + count) along axis 0.
  BasicTensor slice_rows(Index begin, Index count) const {
    const Index stride = size() / shape_.at(0);
    if (begin < 0 || count < 1 || begin + count > shape_[0]) {
      throw ShapeError("row slice out of range for shape " + shape_to_string(shape_));
    }
    Shape out = shape_;
    out[0] = count;
    return BasicTensor(std::move(out), Vector(data_.segment(begin * stride, count * stride)));
  }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           std::equal(begin(), end(), other.begin());
  }

 private:
  void check_rows(Index rows) const {
    if (rows < 1 || size() % rows != 0) {
      throw ShapeError("cannot view " + shape_to_string(shape_) + " as " + std::to_string(rows) + " rows");
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
  }
}

template <typename Scalar, typename F>
BasicTensor<Scalar> tensor_map(const BasicTensor<Scalar>& a, F&& f) {
  BasicTensor<Scalar> out = a;
  for (Scalar& v : out) v = f(v);
  return out;
}

template <typename Scalar, typename F>
BasicTensor<Scalar> tensor_zip(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, F&& f) {
  require_same_shape(a.shape(), b.shape(), "tensor_zip");
  BasicTensor<Scalar> out = a;
  const Scalar* pb = b.data();
  for (Index i = 0; i < out.size(); ++i) out[i] = f(out[i], pb[i]);
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "operator+");
  return BasicTensor<Scalar>(a.shape(), typename BasicTensor<Scalar>::Vector(a.vec() + b.vec()));
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "operator-");
  return BasicTensor<Scalar>(a.shape(), typename BasicTensor<Scalar>::Vector(a.vec() - b.vec()));
}

template <typename Scalar>
BasicTensor<Scalar> operator*(Scalar s, const BasicTensor<Scalar>& a) {
  return BasicTensor<Scalar>(a.shape(), typename BasicTensor<Scalar>::Vector(s * a.vec()));
}

/// a += s * b
template <typename Scalar>
void axpy(Scalar s, const BasicTensor<Scalar>& b, BasicTensor<Scalar>& a) {
  require_same_shape(a.shape(), b.shape(), "axpy");
  a.vec() += s * b.vec();
}

/// Sequential row-major sum; the fixed order keeps results bit-reproducible.
template <typename Scalar>
Scalar sum(const BasicTensor<Scalar>& a) {
  Scalar acc(0);
  for (Scalar v : a) acc += v;
  return acc;
}

template <typename Scalar>
bool all_finite(const BasicTensor<Scalar>& a) {
  return std::all_of(a.begin(), a.end(), [](Scalar v) { return std::isfinite(v); });
}

/// Stack same-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);

/// Rows of `src` (axis 0) selected by `ids`, in order.
Tensor gather_rows(const Tensor& src, const std::vector<Index>& ids);

}  // namespace stcm
