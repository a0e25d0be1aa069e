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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dattn/autodiff.hpp"
#include "dattn/tensor.hpp"

namespace dattn {

/// W x H x D feature grid, the input to both attention detectors.
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(Tensor t) : tensor_(std::move(t)) {
    if (tensor_.shape().rank() != 3) throw DimensionError("feature map must be W x H x D, got " + tensor_.shape().str());
  }
  FeatureMap(Index width, Index height, const Eigen::Ref<const RowMatrixXd>& pixels)
      : FeatureMap(Tensor::from_map(width, height, pixels)) {}

  [[nodiscard]] Index width() const { return tensor_.shape()[0]; }
  [[nodiscard]] Index height() const { return tensor_.shape()[1]; }
  [[nodiscard]] Index depth() const { return tensor_.shape()[2]; }
  [[nodiscard]] Index pixels() const { return width() * height(); }
  [[nodiscard]] const Tensor& tensor() const noexcept { return tensor_; }
  /// (W*H) x D view, pixel (i, j) at row i*H + j.
  [[nodiscard]] Tensor::ConstMatrixMap matrix() const { return tensor_.matrix(); }

  /// Mirror along the width axis.
  [[nodiscard]] FeatureMap flipped_horizontally() const;

 private:
  Tensor tensor_;
};

enum class Variant {
  kDecoupled,     // Expansive + Discriminative detectors
  kConventional,  // class-agnostic attention, pooled-feature classifier
  kSingleStream,  // Discriminative detector alone with dropout around it
};

std::string_view to_string(Variant v);
/// Accepts "decoupled", "conventional", "single-stream". Throws ConfigError.
Variant parse_variant(std::string_view name);

/// Detector weights. For the decoupled model the Expansive block is D x C; the
/// conventional model uses a D x 1 class-agnostic head; single-stream has none.
struct ModelParams {
  Variant variant = Variant::kDecoupled;
  Eigen::MatrixXd w;  // Expansive 1x1 conv weights
  Eigen::VectorXd b;
  Eigen::MatrixXd v;  // Discriminative 1x1 conv / classifier weights, D x C
  Eigen::VectorXd h;
  double dropout_rate = 0.5;
  double eps = 0.1;
  std::vector<std::string> class_names;

  [[nodiscard]] Index feature_dim() const { return v.rows(); }
  [[nodiscard]] Index num_classes() const { return v.cols(); }
  /// Throws ConfigError / DimensionError on inconsistent blocks or ranges.
  void validate() const;
};

/// Fan-in uniform(-1/sqrt(D), 1/sqrt(D)) weights and zero biases.
ModelParams init_params(Variant variant, Index feature_dim, Index num_classes, std::uint64_t seed,
                        double dropout_rate = 0.5, double eps = 0.1);

struct ForwardOutputs {
  Index width = 0;
  Index height = 0;
  RowMatrixXd A;         // Expansive map, each column sums to 1 (N x C; N x 1 for conventional)
  RowMatrixXd S;         // Discriminative score map, N x C
  RowMatrixXd attended;  // S .* A
  Eigen::VectorXd p;     // class scores
  Eigen::VectorXd p_hat; // softmax(p)
};

/// Handles of the trainable blocks on a tape.
struct ParamVars {
  ad::Var w, b, v, h;
};

struct GraphOutputs {
  ad::Var A, S, attended, p;
};

/// Record the forward pass of `params.variant` on `tape`. Dropout masks are
/// keyed by `seed` (stream 1 before the conv, stream 2 after it).
GraphOutputs build_forward(ad::Tape& tape, const ModelParams& params, ad::Var x, const ParamVars& vars,
                           bool training, std::uint64_t seed);

/// Put the parameter blocks on `tape` as trainable leaves (empty blocks become constants).
ParamVars add_parameters(ad::Tape& tape, const ModelParams& params);

/// z = softplus_eps(conv(dropout(x)) with dropout after the conv), A = z / sum z,
/// S = conv(x; v, h), p_c = sum_ij S .* A.
ForwardOutputs forward_decoupled(const FeatureMap& x, const ModelParams& params, bool training = false,
                                 std::uint64_t seed = 0);

/// a = normalize(softplus_eps(w'x + b)), p_c = (sum_ij x_ij a_ij)' v_c + h_c.
ForwardOutputs forward_conventional(const FeatureMap& x, const ModelParams& params);

/// p_c = mean_ij S[i,j,c], dropout before and after the conv when training.
ForwardOutputs forward_single_stream(const FeatureMap& x, const ModelParams& params, bool training = false,
                                     std::uint64_t seed = 0);

/// Dispatch on params.variant.
ForwardOutputs forward(const FeatureMap& x, const ModelParams& params, bool training = false, std::uint64_t seed = 0);

struct TrainConfig {
  Index batch_size = 15;
  double lr_attention = 0.1;
  /// Reserved for trainable feature adapters; the detectors use lr_attention.
  double lr_backbonelike = 0.01;
  double lr_decay_factor = 10.0;
  int decay_epoch = 10;
  int total_epochs = 20;
  std::uint64_t seed = 0;
  /// Mirror feature maps horizontally with probability 1/2.
  bool hflip = true;

  void validate() const;
  /// Learning rate in effect during `epoch` (0-based).
  [[nodiscard]] double learning_rate(int epoch) const;
};

struct Sample {
  FeatureMap features;
  Eigen::VectorXd labels;  // multi-hot over the model classes
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // mean per-sample loss of each epoch
};

/// Loss of one sample (Eq. 10 form), recorded on `tape`.
ad::Var sample_loss(ad::Tape& tape, const ModelParams& params, const ParamVars& vars, const FeatureMap& x,
                    const Eigen::VectorXd& labels, bool training, std::uint64_t seed);

/// Minibatch SGD without momentum. Deterministic given cfg.seed.
TrainResult train(std::span<const Sample> dataset, const TrainConfig& cfg, ModelParams params);

/// model.json plus w/b/v/h DTEN tensors under `dir`. Weights are stored as f32.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace dattn
