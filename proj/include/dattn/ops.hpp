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

// Elementwise and per-channel kernels shared by the autodiff tape and the
// annotation code. All functions accept Eigen expressions.

#include <cmath>

#include <Eigen/Core>

#include "dattn/errors.hpp"

namespace dattn::ops {

/// log(1 + exp(x)) without overflow: max(x, 0) + log1p(exp(-|x|)).
template <typename Derived>
auto log1p_exp(const Eigen::ArrayBase<Derived>& x) {
  return x.max(typename Derived::Scalar(0)) + (-x.abs()).exp().log1p();
}

/// Logistic function evaluated on the side of zero that cannot overflow.
template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
}

/// log(1 + exp(x)) + eps.
template <typename Derived>
auto softplus_eps(const Eigen::ArrayBase<Derived>& x, typename Derived::Scalar eps) {
  return log1p_exp(x) + eps;
}

/// Divide every column by its sum. Throws if any column sum is not positive.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
spatial_normalize(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const auto sums = z.colwise().sum().eval();
  for (Eigen::Index c = 0; c < sums.size(); ++c) {
    if (!(sums(c) > Scalar(0))) {
      throw NormalizationError("spatial_normalize: channel " + std::to_string(c) +
                               " has nonpositive sum");
    }
  }
  return z.array().rowwise() / sums.array();
}

/// Numerically stable softmax over a vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& p) {
  const auto shifted = (p.array() - p.maxCoeff()).exp().eval();
  return (shifted / shifted.sum()).matrix();
}

}  // namespace dattn::ops
