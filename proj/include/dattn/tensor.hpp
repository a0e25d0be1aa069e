// Copyright 2026 The dattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dattn/errors.hpp"

namespace dattn {

using Index = Eigen::Index;

/// Row-major dynamic matrix. Spatial maps are stored as (W*H) x channels with
/// pixel (i, j) at row i*H + j, which is exactly the row-major W x H x C layout.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = RowMatrix<double>;

/// Extents of a dense tensor, at most four axes, every extent positive.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<Index> extents) : Shape(std::vector<Index>(extents)) {}
  explicit Shape(std::vector<Index> extents) : extents_(std::move(extents)) {
    if (extents_.size() > kMaxRank) throw DimensionError("tensor rank exceeds 4");
    for (Index e : extents_) {
      if (e <= 0) throw DimensionError("tensor extents must be positive");
    }
  }

  [[nodiscard]] std::size_t rank() const noexcept { return extents_.size(); }
  [[nodiscard]] Index operator[](std::size_t axis) const { return extents_.at(axis); }
  [[nodiscard]] const std::vector<Index>& extents() const noexcept { return extents_; }
  [[nodiscard]] Index size() const noexcept {
    return std::accumulate(extents_.begin(), extents_.end(), Index{1}, std::multiplies<>());
  }

  friend bool operator==(const Shape&, const Shape&) = default;

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < extents_.size(); ++k) os << (k ? "x" : "") << extents_[k];
    os << ']';
    return os.str();
  }

 private:
  std::vector<Index> extents_;
};

/// Dense row-major tensor holding its values in an Eigen array.
template <typename Scalar>
class BasicTensor {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), values_(Values::Zero(shape_.size())) {}
  BasicTensor(Shape shape, Values values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw DimensionError("tensor value count does not match shape " + shape_.str());
    }
  }

  static BasicTensor constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }

  /// Wrap a (W*H) x C matrix as a W x H x C tensor.
  template <typename Derived>
  static BasicTensor from_map(Index width, Index height, const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() != width * height) throw DimensionError("map rows must equal width*height");
    BasicTensor t(Shape{width, height, m.cols()});
    t.matrix() = m;
    return t;
  }

  template <typename Derived>
  static BasicTensor from_vector(const Eigen::DenseBase<Derived>& v) {
    BasicTensor t(Shape{v.size()});
    t.values_ = v.derived().template cast<Scalar>().template reshaped<Eigen::RowMajor>();
    return t;
  }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] Index size() const noexcept { return values_.size(); }
  [[nodiscard]] bool empty() const noexcept { return values_.size() == 0; }

  [[nodiscard]] Values& values() noexcept { return values_; }
  [[nodiscard]] const Values& values() const noexcept { return values_; }
  Scalar& operator[](Index k) { return values_[k]; }
  Scalar operator[](Index k) const { return values_[k]; }

  /// Trailing axis becomes the columns; all leading axes are flattened into rows.
  [[nodiscard]] Index rows() const { return shape_.rank() == 0 ? 0 : size() / cols(); }
  [[nodiscard]] Index cols() const { return shape_.rank() == 0 ? 0 : shape_[shape_.rank() - 1]; }
  [[nodiscard]] MatrixMap matrix() { return MatrixMap(values_.data(), rows(), cols()); }
  [[nodiscard]] ConstMatrixMap matrix() const { return ConstMatrixMap(values_.data(), rows(), cols()); }

  [[nodiscard]] BasicTensor reshaped(Shape shape) const {
    if (shape.size() != size()) throw DimensionError("reshape must preserve element count");
    return BasicTensor(std::move(shape), values_);
  }

  [[nodiscard]] bool all_finite() const { return values_.allFinite(); }

 private:
  Shape shape_;
  Values values_;
};

using Tensor = BasicTensor<double>;

}  // namespace dattn
