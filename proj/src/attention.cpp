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

#include "dattn/attention.hpp"

#include <cmath>
#include <numeric>

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"
#include "dattn/ops.hpp"
#include "dattn/random.hpp"

namespace dattn {

FeatureMap FeatureMap::flipped_horizontally() const {
  Tensor out(tensor_.shape());
  const Index w = width();
  const Index hd = height() * depth();
  for (Index i = 0; i < w; ++i) {
    out.values().segment((w - 1 - i) * hd, hd) = tensor_.values().segment(i * hd, hd);
  }
  return FeatureMap(std::move(out));
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kDecoupled: return "decoupled";
    case Variant::kConventional: return "conventional";
    case Variant::kSingleStream: return "single-stream";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "decoupled") return Variant::kDecoupled;
  if (name == "conventional") return Variant::kConventional;
  if (name == "single-stream") return Variant::kSingleStream;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

void ModelParams::validate() const {
  if (v.size() == 0) throw ConfigError("model has no discriminative block");
  if (h.size() != v.cols()) throw DimensionError("discriminative bias length must equal C");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  switch (variant) {
    case Variant::kDecoupled:
      if (w.rows() != v.rows() || w.cols() != v.cols()) {
        throw DimensionError("expansive and discriminative blocks must share D and C");
      }
      break;
    case Variant::kConventional:
      if (w.rows() != v.rows() || w.cols() != 1) throw DimensionError("conventional attention head must be D x 1");
      break;
    case Variant::kSingleStream:
      if (w.size() != 0) throw DimensionError("single-stream model has no expansive block");
      break;
  }
  if (b.size() != w.cols()) throw DimensionError("expansive bias length must equal its output channels");
  if (!class_names.empty() && static_cast<Index>(class_names.size()) != num_classes()) {
    throw ConfigError("class_names must list one name per class");
  }
}

ModelParams init_params(Variant variant, Index feature_dim, Index num_classes, std::uint64_t seed,
                        double dropout_rate, double eps) {
  if (feature_dim <= 0 || num_classes <= 0) throw ConfigError("feature_dim and num_classes must be positive");
  auto cur = CounterRng(seed, 0x1a17).cursor();
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  auto uniform_block = [&](Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = cur.uniform(-bound, bound);
    return m;
  };

  ModelParams p;
  p.variant = variant;
  p.dropout_rate = dropout_rate;
  p.eps = eps;
  const Index head = variant == Variant::kDecoupled ? num_classes : variant == Variant::kConventional ? 1 : 0;
  p.w = uniform_block(feature_dim, head);
  p.b = Eigen::VectorXd::Zero(head);
  p.v = uniform_block(feature_dim, num_classes);
  p.h = Eigen::VectorXd::Zero(num_classes);
  p.validate();
  return p;
}

namespace {

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t(Shape{m.rows(), m.cols()});
  t.matrix() = m;
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) { return t.matrix(); }

}  // namespace

ParamVars add_parameters(ad::Tape& tape, const ModelParams& params) {
  ParamVars vars;
  if (params.w.size() > 0) {
    vars.w = tape.parameter(to_tensor(params.w));
    vars.b = tape.parameter(Tensor::from_vector(params.b));
  }
  vars.v = tape.parameter(to_tensor(params.v));
  vars.h = tape.parameter(Tensor::from_vector(params.h));
  return vars;
}

GraphOutputs build_forward(ad::Tape& tape, const ModelParams& params, ad::Var x, const ParamVars& vars,
                           bool training, std::uint64_t seed) {
  const double rate = params.dropout_rate;
  GraphOutputs out;
  switch (params.variant) {
    case Variant::kDecoupled: {
      const ad::Var x_drop = ad::dropout(tape, x, rate, training, seed, 1);
      const ad::Var logits = ad::conv1x1(tape, x_drop, vars.w, vars.b);
      const ad::Var logits_drop = ad::dropout(tape, logits, rate, training, seed, 2);
      out.A = ad::spatial_normalize(tape, ad::softplus_eps(tape, logits_drop, params.eps));
      out.S = ad::conv1x1(tape, x, vars.v, vars.h);
      out.attended = ad::mul(tape, out.S, out.A);
      out.p = ad::spatial_sum(tape, out.attended);
      break;
    }
    case Variant::kConventional: {
      const ad::Var z = ad::softplus_eps(tape, ad::conv1x1(tape, x, vars.w, vars.b), params.eps);
      out.A = ad::spatial_normalize(tape, z);
      const ad::Var pooled = ad::weighted_sum_pool(tape, x, out.A);
      const Index d = tape.value(pooled).size();
      const ad::Var scores = ad::conv1x1(tape, ad::reshape(tape, pooled, Shape{1, 1, d}), vars.v, vars.h);
      out.p = ad::reshape(tape, scores, Shape{tape.value(scores).size()});
      break;
    }
    case Variant::kSingleStream: {
      const ad::Var x_drop = ad::dropout(tape, x, rate, training, seed, 1);
      const ad::Var s = ad::conv1x1(tape, x_drop, vars.v, vars.h);
      out.S = ad::dropout(tape, s, rate, training, seed, 2);
      out.p = ad::spatial_avg_pool(tape, out.S);
      break;
    }
  }
  return out;
}

namespace {

ForwardOutputs run_forward(const FeatureMap& x, const ModelParams& params, bool training, std::uint64_t seed) {
  params.validate();
  if (x.depth() != params.feature_dim()) {
    throw DimensionError("feature depth " + std::to_string(x.depth()) + " does not match model D " +
                         std::to_string(params.feature_dim()));
  }
  ad::Tape tape;
  const ad::Var xv = tape.constant(x.tensor());
  ParamVars vars;
  if (params.w.size() > 0) {
    vars.w = tape.constant(to_tensor(params.w));
    vars.b = tape.constant(Tensor::from_vector(params.b));
  }
  vars.v = tape.constant(to_tensor(params.v));
  vars.h = tape.constant(Tensor::from_vector(params.h));
  const GraphOutputs g = build_forward(tape, params, xv, vars, training, seed);

  ForwardOutputs out;
  out.width = x.width();
  out.height = x.height();
  if (g.A.valid()) out.A = tape.value(g.A).matrix();
  if (g.S.valid()) out.S = tape.value(g.S).matrix();
  if (g.attended.valid()) out.attended = tape.value(g.attended).matrix();
  out.p = tape.value(g.p).values().matrix();
  out.p_hat = ops::softmax(out.p);
  return out;
}

void require_variant(const ModelParams& params, Variant v) {
  if (params.variant != v) {
    throw ContractError("model variant is " + std::string(to_string(params.variant)) + ", expected " +
                        std::string(to_string(v)));
  }
}

}  // namespace

ForwardOutputs forward_decoupled(const FeatureMap& x, const ModelParams& params, bool training, std::uint64_t seed) {
  require_variant(params, Variant::kDecoupled);
  return run_forward(x, params, training, seed);
}

ForwardOutputs forward_conventional(const FeatureMap& x, const ModelParams& params) {
  require_variant(params, Variant::kConventional);
  return run_forward(x, params, false, 0);
}

ForwardOutputs forward_single_stream(const FeatureMap& x, const ModelParams& params, bool training,
                                     std::uint64_t seed) {
  require_variant(params, Variant::kSingleStream);
  return run_forward(x, params, training, seed);
}

ForwardOutputs forward(const FeatureMap& x, const ModelParams& params, bool training, std::uint64_t seed) {
  return run_forward(x, params, training, seed);
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(lr_attention > 0.0) || !(lr_backbonelike > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  if (total_epochs <= 0) throw ConfigError("total_epochs must be positive");
  if (decay_epoch < 0 || decay_epoch >= total_epochs) throw ConfigError("decay_epoch must be in [0, total_epochs)");
}

double TrainConfig::learning_rate(int epoch) const {
  return epoch >= decay_epoch ? lr_attention / lr_decay_factor : lr_attention;
}

ad::Var sample_loss(ad::Tape& tape, const ModelParams& params, const ParamVars& vars, const FeatureMap& x,
                    const Eigen::VectorXd& labels, bool training, std::uint64_t seed) {
  const ad::Var xv = tape.constant(x.tensor());
  const GraphOutputs g = build_forward(tape, params, xv, vars, training, seed);
  return ad::multilabel_bce(tape, g.p, labels);
}

TrainResult train(std::span<const Sample> dataset, const TrainConfig& cfg, ModelParams params) {
  cfg.validate();
  params.validate();
  if (dataset.empty()) throw DataError("training set is empty");
  for (const Sample& s : dataset) {
    if (s.features.depth() != params.feature_dim()) throw DimensionError("sample feature depth does not match model");
    if (s.labels.size() != params.num_classes()) throw DimensionError("sample label length does not match model");
  }

  const auto n = static_cast<std::uint64_t>(dataset.size());
  const CounterRng shuffle_rng(cfg.seed, 0x5f1e);
  const CounterRng flip_rng(cfg.seed, 0xf11b);
  const CounterRng dropout_rng(cfg.seed, 0xd20b);

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto cur = shuffle_rng.split(static_cast<std::uint64_t>(epoch)).cursor();
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[cur.below(k)]);

    const double lr = cfg.learning_rate(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(params.w.rows(), params.w.cols());
      Eigen::VectorXd gb = Eigen::VectorXd::Zero(params.b.size());
      Eigen::MatrixXd gv = Eigen::MatrixXd::Zero(params.v.rows(), params.v.cols());
      Eigen::VectorXd gh = Eigen::VectorXd::Zero(params.h.size());

      for (std::size_t pos = start; pos < stop; ++pos) {
        const std::uint64_t draw = static_cast<std::uint64_t>(epoch) * n + pos;
        const Sample& sample = dataset[order[pos]];
        const bool flip = cfg.hflip && flip_rng.uniform(draw) < 0.5;

        ad::Tape tape;
        const ParamVars vars = add_parameters(tape, params);
        const ad::Var loss = sample_loss(tape, params, vars, flip ? sample.features.flipped_horizontally() : sample.features,
                                         sample.labels, true, dropout_rng.bits(draw));
        tape.backward(loss);
        epoch_loss += tape.value(loss)[0];
        if (vars.w.valid()) {
          gw += to_matrix(tape.grad(vars.w));
          gb += tape.grad(vars.b).values().matrix();
        }
        gv += to_matrix(tape.grad(vars.v));
        gh += tape.grad(vars.h).values().matrix();
      }

      const double step = lr / static_cast<double>(stop - start);
      if (params.w.size() > 0) {
        params.w -= step * gw;
        params.b -= step * gb;
      }
      params.v -= step * gv;
      params.h -= step * gh;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  result.params = std::move(params);
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params) {
  params.validate();
  nlohmann::json header = {
      {"format", "dattn-checkpoint"},
      {"version", 1},
      {"variant", std::string(to_string(params.variant))},
      {"D", params.feature_dim()},
      {"C", params.num_classes()},
      {"eps", params.eps},
      {"dropout_rate", params.dropout_rate},
      {"class_names", params.class_names},
  };
  nlohmann::json files = nlohmann::json::object();
  auto put = [&](const char* name, const Tensor& t) {
    const std::string file = std::string(name) + ".dten";
    io::write_dten(dir / file, t);
    files[name] = file;
  };
  if (params.w.size() > 0) {
    put("w", to_tensor(params.w));
    put("b", Tensor::from_vector(params.b));
  }
  put("v", to_tensor(params.v));
  put("h", Tensor::from_vector(params.h));
  header["tensors"] = files;
  io::write_json(dir / "model.json", header);
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json header = io::read_json(dir / "model.json");
  try {
    if (header.at("format") != "dattn-checkpoint" || header.at("version") != 1) {
      throw DataError("unrecognized checkpoint header");
    }
    ModelParams p;
    p.variant = parse_variant(header.at("variant").get<std::string>());
    p.eps = header.at("eps").get<double>();
    p.dropout_rate = header.at("dropout_rate").get<double>();
    p.class_names = header.at("class_names").get<std::vector<std::string>>();
    const auto& files = header.at("tensors");
    auto matrix = [&](const char* name) { return to_matrix(io::read_dten(dir / files.at(name).get<std::string>())); };
    auto vector = [&](const char* name) {
      return Eigen::VectorXd(io::read_dten(dir / files.at(name).get<std::string>()).values().matrix());
    };
    if (files.contains("w")) {
      p.w = matrix("w");
      p.b = vector("b");
    }
    p.v = matrix("v");
    p.h = vector("h");
    if (p.feature_dim() != header.at("D").get<Index>() || p.num_classes() != header.at("C").get<Index>()) {
      throw DataError("checkpoint tensors disagree with header D/C");
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + "/model.json: " + e.what());
  } catch (const DimensionError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
}

}  // namespace dattn
