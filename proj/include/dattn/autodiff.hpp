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

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape owns every node created during one forward evaluation. Nodes are
// appended in evaluation order, so walking the tape backwards is a reverse
// topological traversal and each node's rule runs exactly once.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "dattn/tensor.hpp"

namespace dattn::ad {

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  [[nodiscard]] bool valid() const noexcept { return id != kInvalid; }
};

class Tape {
 public:
  /// Propagates `out_grad` into the inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Register an op result. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  [[nodiscard]] const Tensor& value(Var v) const { return node(v).value; }
  [[nodiscard]] bool requires_grad(Var v) const { return node(v).requires_grad; }
  /// Gradient of the last backward() target w.r.t. `v`; zeros if unreached.
  [[nodiscard]] Tensor grad(Var v) const;
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Add `g` into the gradient slot of `v` (no-op for constants).
  template <typename Derived>
  void accumulate(Var v, const Eigen::DenseBase<Derived>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    ensure_grad(n);
    n.grad.values() += g.derived().template reshaped<Eigen::RowMajor>().array();
  }

  /// Seed d(out)/d(out) = 1 and run every reachable backward rule once.
  /// `out` must hold a single element.
  void backward(Var out);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v);
  [[nodiscard]] const Node& node(Var v) const;
  static void ensure_grad(Node& n);

  std::vector<Node> nodes_;
};

/// out[i,j,c] = sum_d x[i,j,d] * weights[d,c] + bias[c]. `x` may have any rank;
/// its trailing axis is the feature axis.
Var conv1x1(Tape& tape, Var x, Var weights, Var bias);

/// log(1 + exp(x)) + eps, elementwise.
Var softplus_eps(Tape& tape, Var x, double eps);

/// Divide each channel (trailing axis) by its spatial sum.
Var spatial_normalize(Tape& tape, Var z);

/// Inverted dropout. The mask is drawn from CounterRng(seed, stream), so the
/// same (seed, stream) reproduces the same mask.
Var dropout(Tape& tape, Var x, double rate, bool training, std::uint64_t seed, std::uint64_t stream);

/// Mean over all leading axes, shape [C].
Var spatial_avg_pool(Tape& tape, Var x);

/// Sum over all leading axes, shape [C].
Var spatial_sum(Tape& tape, Var x);

/// Elementwise product of two same-shape tensors.
Var mul(Tape& tape, Var a, Var b);

/// sum_{i,j} x[i,j,:] * a[i,j] for a W x H x D feature and W x H x 1 weights, shape [D].
Var weighted_sum_pool(Tape& tape, Var x, Var a);

Var reshape(Tape& tape, Var x, Shape shape);

/// Sum of all elements, shape [1].
Var sum(Tape& tape, Var x);

/// -sum_c [ y_c log s(p_c) + (1 - y_c) log(1 - s(p_c)) ] in log-sum-exp form, shape [1].
Var multilabel_bce(Tape& tape, Var scores, const Eigen::Ref<const Eigen::VectorXd>& targets);

}  // namespace dattn::ad
