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

#include "dattn/autodiff.hpp"

#include <string>
#include <utility>

#include "dattn/ops.hpp"
#include "dattn/random.hpp"

namespace dattn::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, nullptr});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), true, nullptr});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs_grad = false;
  for (Var in : inputs) needs_grad = needs_grad || node(in).requires_grad;
  if (!value.all_finite()) throw std::domain_error("non-finite value produced on tape");
  nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, needs_grad ? std::move(fn) : nullptr});
  return Var{nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw ContractError("gradient requested for a constant node");
  // unreached by the last backward pass
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var out) {
  Node& root = node(out);
  if (root.value.size() != 1) throw ContractError("backward() needs a scalar output");
  for (Node& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  ensure_grad(root);
  root.grad[0] = 1.0;
  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
  }
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return nodes_[v.id];
}

void Tape::ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

std::vector<Index> with_last(const Shape& s, Index last) {
  std::vector<Index> e = s.extents();
  e.back() = last;
  return e;
}

}  // namespace

Var conv1x1(Tape& tape, Var x, Var weights, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weights);
  const Tensor& bv = tape.value(bias);
  if (wv.shape().rank() != 2) throw DimensionError("conv1x1: weights must be D x C");
  if (xv.shape().rank() == 0 || xv.cols() != wv.shape()[0]) {
    throw DimensionError("conv1x1: feature depth " + std::to_string(xv.cols()) +
                         " does not match weight rows " + std::to_string(wv.shape()[0]));
  }
  if (bv.size() != wv.shape()[1]) throw DimensionError("conv1x1: bias length must equal C");

  Tensor out(Shape(with_last(xv.shape(), wv.shape()[1])));
  out.matrix().noalias() = xv.matrix() * wv.matrix();
  out.matrix().rowwise() += bv.values().matrix().transpose();

  return tape.record(std::move(out), {x, weights, bias}, [x, weights, bias](Tape& t, const Tensor& g) {
    const auto gm = g.matrix();
    if (t.requires_grad(x)) t.accumulate(x, gm * t.value(weights).matrix().transpose());
    if (t.requires_grad(weights)) t.accumulate(weights, t.value(x).matrix().transpose() * gm);
    if (t.requires_grad(bias)) t.accumulate(bias, gm.colwise().sum());
  });
}

Var softplus_eps(Tape& tape, Var x, double eps) {
  if (!(eps >= 0.0)) throw ContractError("softplus_eps: eps must be nonnegative");
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape(), ops::softplus_eps(xv.values(), eps));
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, (g.values() * ops::sigmoid(t.value(x).values())).matrix());
  });
}

Var spatial_normalize(Tape& tape, Var z) {
  const Tensor& zv = tape.value(z);
  Tensor out(zv.shape());
  out.matrix() = ops::spatial_normalize(zv.matrix());
  const Eigen::RowVectorXd sums = zv.matrix().colwise().sum();
  const Var self{tape.size()};
  return tape.record(std::move(out), {z}, [z, self, sums](Tape& t, const Tensor& g) {
    // d a_p / d z_q = (delta_pq - a_p) / s  per channel
    const auto a = t.value(self).matrix();
    const auto gm = g.matrix();
    const Eigen::RowVectorXd inner = (gm.array() * a.array()).colwise().sum();
    RowMatrixXd dz = (gm.rowwise() - inner);
    dz.array().rowwise() /= sums.array();
    t.accumulate(z, dz);
  });
}

Var dropout(Tape& tape, Var x, double rate, bool training, std::uint64_t seed, std::uint64_t stream) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
  const Tensor& xv = tape.value(x);
  if (!training || rate == 0.0) {
    Tensor out = xv;
    return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& g) { t.accumulate(x, g.values().matrix()); });
  }
  const CounterRng rng(seed, stream);
  const double scale = 1.0 / (1.0 - rate);
  Eigen::ArrayXd gate(xv.size());
  for (Index k = 0; k < gate.size(); ++k) {
    gate[k] = rng.uniform(static_cast<std::uint64_t>(k)) >= rate ? scale : 0.0;
  }
  Tensor out(xv.shape(), xv.values() * gate);
  return tape.record(std::move(out), {x}, [x, gate = std::move(gate)](Tape& t, const Tensor& g) {
    t.accumulate(x, (g.values() * gate).matrix());
  });
}

Var spatial_avg_pool(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const Index n = xv.rows();
  Tensor out = Tensor::from_vector((xv.matrix().colwise().sum() / static_cast<double>(n)).transpose());
  return tape.record(std::move(out), {x}, [x, n](Tape& t, const Tensor& g) {
    const RowMatrixXd dx = (g.values().matrix().transpose() / static_cast<double>(n)).replicate(n, 1);
    t.accumulate(x, dx);
  });
}

Var spatial_sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const Index n = xv.rows();
  Tensor out = Tensor::from_vector(xv.matrix().colwise().sum().transpose());
  return tape.record(std::move(out), {x}, [x, n](Tape& t, const Tensor& g) {
    const RowMatrixXd dx = g.values().matrix().transpose().replicate(n, 1);
    t.accumulate(x, dx);
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape(), av.values() * bv.values());
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, (g.values() * t.value(b).values()).matrix());
    if (t.requires_grad(b)) t.accumulate(b, (g.values() * t.value(a).values()).matrix());
  });
}

Var weighted_sum_pool(Tape& tape, Var x, Var a) {
  const Tensor& xv = tape.value(x);
  const Tensor& av = tape.value(a);
  if (av.cols() != 1 || av.rows() != xv.rows()) {
    throw DimensionError("weighted_sum_pool: weights must be W x H x 1 matching the feature map");
  }
  Tensor out = Tensor::from_vector((av.matrix().transpose() * xv.matrix()).transpose());
  return tape.record(std::move(out), {x, a}, [x, a](Tape& t, const Tensor& g) {
    const Eigen::RowVectorXd gd = g.values().matrix().transpose();
    if (t.requires_grad(x)) t.accumulate(x, t.value(a).matrix() * gd);
    if (t.requires_grad(a)) t.accumulate(a, t.value(x).matrix() * gd.transpose());
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& g) { t.accumulate(x, g.values().matrix()); });
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out(Shape{1});
  out[0] = xv.values().sum();
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Eigen::VectorXd::Constant(t.value(x).size(), g[0]));
  });
}

Var multilabel_bce(Tape& tape, Var scores, const Eigen::Ref<const Eigen::VectorXd>& targets) {
  const Tensor& pv = tape.value(scores);
  if (pv.size() != targets.size()) throw DimensionError("multilabel_bce: score and label lengths differ");
  for (Index c = 0; c < targets.size(); ++c) {
    if (targets[c] != 0.0 && targets[c] != 1.0) throw ContractError("multilabel_bce: labels must be 0 or 1");
  }
  const Eigen::ArrayXd p = pv.values();
  const Eigen::ArrayXd y = targets.array();
  Tensor out(Shape{1});
  out[0] = (p.max(0.0) - p * y + (-p.abs()).exp().log1p()).sum();
  return tape.record(std::move(out), {scores}, [scores, y](Tape& t, const Tensor& g) {
    const Eigen::ArrayXd dp = (ops::sigmoid(t.value(scores).values()) - y) * g[0];
    t.accumulate(scores, dp.matrix());
  });
}

}  // namespace dattn::ad
