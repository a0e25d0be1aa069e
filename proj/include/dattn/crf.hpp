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

// Mean-field inference for a fully connected pairwise CRF with Gaussian
// bilateral and smoothness kernels and Potts compatibility. Messages are
// computed exactly over all pixel pairs, which is fine up to ~128x128.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dattn/annotation.hpp"

namespace dattn {

struct CrfConfig {
  int n_iters = 5;
  double w_bilateral = 10.0;
  double theta_alpha = 8.0;  // pixels
  double theta_beta = 13.0;  // intensity units
  double w_smooth = 3.0;
  double theta_gamma = 3.0;  // pixels

  void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
CrfConfig crf_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CrfConfig& cfg);

/// Smallest probability before taking -log for the unary energy.
inline constexpr double kUnaryFloor = 1e-10;

/// Per-pixel label distributions over the image's present classes.
struct Marginals {
  Index width = 0;
  Index height = 0;
  std::vector<int> class_index;  // column l -> dataset class id
  RowMatrixXd q;                 // (W*H) x L
};

/// Called after every mean-field iteration with the 1-based iteration number.
using MeanFieldObserver = std::function<void(int iteration, const RowMatrixXd& q)>;

/// Run exactly cfg.n_iters mean-field updates starting from Q = softmax(-u),
/// u = -log(max(z, kUnaryFloor)) on the present classes. `image` is
/// (W*H) x channels in the same pixel order as the unary field.
Marginals mean_field(const ProbField& unary, const Eigen::Ref<const RowMatrixXd>& image, const CrfConfig& cfg,
                     const MeanFieldObserver& observer = {});

/// Per-pixel argmax mapped through `class_index`; ties go to the lowest column.
PseudoMask argmax_mask(const Eigen::Ref<const RowMatrixXd>& q, Index width, Index height,
                       std::span<const int> class_index);
PseudoMask argmax_mask(const Marginals& marginals);

}  // namespace dattn
