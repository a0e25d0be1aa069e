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

// On-disk dataset layout: manifest.json plus, per scene, a DTEN feature map,
// a DTEN W x H x 3 image and a ground-truth mask file.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dattn/synthetic.hpp"

namespace dattn {

struct DatasetInfo {
  Index width = 0;
  Index height = 0;
  Index num_classes = 0;
  Index feature_dim = 0;
  std::vector<std::string> class_names;
};

struct Dataset {
  DatasetInfo info;
  std::vector<SyntheticScene> scenes;
};

/// Generate `cfg.count` scenes under `dir`. With count 0 only the manifest is written.
void gen_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& dir);

/// Read a dataset written by gen_synthetic. Throws DataError on missing or inconsistent files.
Dataset load_dataset(const std::filesystem::path& dir);

/// Training samples (features + multi-hot labels) of a dataset.
std::vector<Sample> training_samples(const Dataset& data);

}  // namespace dattn
