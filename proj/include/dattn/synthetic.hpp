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

// Desk-scale synthetic scenes standing in for backbone features: compact
// elliptical objects whose class channel carries weak evidence over the whole
// body and strong evidence on a smaller interior part, plus distractor
// channels of class-independent blobs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dattn/annotation.hpp"
#include "dattn/attention.hpp"

namespace dattn {

struct SyntheticConfig {
  Index count = 200;
  Index width = 64;
  Index height = 64;
  Index num_classes = 4;  // including background
  Index feature_dim = 8;  // first num_classes - 1 channels carry class evidence
  double noise_sigma = 0.1;
  /// Target mean fraction of image pixels per foreground class.
  std::vector<double> class_priors = {0.08, 0.08, 0.08};
  /// Independent per-class presence probability before conditioning on a
  /// nonempty label set.
  double presence = 0.5;
  double body_evidence = 3.0;
  double part_evidence = 6.0;
  double image_noise = 8.0;  // intensity units
  std::uint64_t seed = 7;

  void validate() const;
  [[nodiscard]] std::vector<std::string> class_names() const;
  /// P(class c present | at least one class present), c = 1..C-1.
  [[nodiscard]] std::vector<double> conditional_presence() const;
};

SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SyntheticConfig& cfg);

struct SyntheticScene {
  std::string id;
  FeatureMap features;       // W x H x D
  RowMatrixXd image;         // (W*H) x 3 intensities in [0, 255]
  PseudoMask ground_truth;   // no void
  std::vector<int> labels;   // foreground labels present, ascending
};

/// Scene `index` of the dataset described by `cfg`. Pure function of (cfg, index).
SyntheticScene generate_scene(const SyntheticConfig& cfg, Index index);

/// Multi-hot vector over the C-1 foreground classes.
Eigen::VectorXd multi_hot(const std::vector<int>& labels, Index num_classes);

}  // namespace dattn
