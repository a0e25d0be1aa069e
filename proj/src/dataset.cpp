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

#include "dattn/dataset.hpp"

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"

namespace dattn {
namespace {

constexpr const char* kManifestFormat = "dattn-manifest";

nlohmann::json feature_meta(const std::vector<std::string>& names) {
  return {{"axes", {"width", "height", "channel"}}, {"role", "features"}, {"class_names", names}};
}

nlohmann::json image_meta() { return {{"axes", {"width", "height", "channel"}}, {"role", "image"}, {"channels", {"r", "g", "b"}}}; }

}  // namespace

void gen_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  const auto names = cfg.class_names();
  nlohmann::json scenes = nlohmann::json::array();
  for (Index k = 0; k < cfg.count; ++k) {
    const SyntheticScene scene = generate_scene(cfg, k);
    const std::string features = scene.id + ".feat.dten";
    const std::string image = scene.id + ".image.dten";
    const std::string gt = scene.id + ".gt.mask";
    io::write_dten_with_sidecar(dir / features, scene.features.tensor(), feature_meta(names));
    io::write_dten_with_sidecar(dir / image, Tensor::from_map(cfg.width, cfg.height, scene.image), image_meta());
    write_mask(dir / gt, scene.ground_truth, names);
    scenes.push_back({{"id", scene.id}, {"features", features}, {"image", image}, {"gt", gt}, {"labels", scene.labels}});
  }
  io::write_json(dir / "manifest.json", {{"format", kManifestFormat},
                                         {"version", 1},
                                         {"width", cfg.width},
                                         {"height", cfg.height},
                                         {"num_classes", cfg.num_classes},
                                         {"feature_dim", cfg.feature_dim},
                                         {"class_names", names},
                                         {"generator", to_json(cfg)},
                                         {"scenes", scenes}});
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw DataError("no manifest.json in " + dir.string());
  const nlohmann::json manifest = io::read_json(manifest_path);
  Dataset data;
  try {
    if (manifest.at("format") != kManifestFormat || manifest.at("version") != 1) {
      throw DataError(manifest_path.string() + ": unrecognized manifest");
    }
    data.info.width = manifest.at("width").get<Index>();
    data.info.height = manifest.at("height").get<Index>();
    data.info.num_classes = manifest.at("num_classes").get<Index>();
    data.info.feature_dim = manifest.at("feature_dim").get<Index>();
    data.info.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    for (const auto& entry : manifest.at("scenes")) {
      SyntheticScene scene;
      scene.id = entry.at("id").get<std::string>();
      scene.features = FeatureMap(io::read_dten(dir / entry.at("features").get<std::string>()));
      const Tensor image = io::read_dten(dir / entry.at("image").get<std::string>());
      scene.ground_truth = read_mask(dir / entry.at("gt").get<std::string>());
      scene.labels = entry.at("labels").get<std::vector<int>>();

      const auto& info = data.info;
      if (scene.features.width() != info.width || scene.features.height() != info.height ||
          scene.features.depth() != info.feature_dim) {
        throw DataError(scene.id + ": feature map extents disagree with the manifest");
      }
      if (!(image.shape() == Shape{info.width, info.height, 3})) {
        throw DataError(scene.id + ": image must be W x H x 3");
      }
      if (scene.ground_truth.width != info.width || scene.ground_truth.height != info.height) {
        throw DataError(scene.id + ": ground-truth mask extents disagree with the manifest");
      }
      if (scene.labels.empty()) throw DataError(scene.id + ": empty label set");
      for (int c : scene.labels) {
        if (c < 1 || c >= info.num_classes) throw DataError(scene.id + ": label out of range");
      }
      scene.image = image.matrix();
      data.scenes.push_back(std::move(scene));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  return data;
}

std::vector<Sample> training_samples(const Dataset& data) {
  std::vector<Sample> samples;
  samples.reserve(data.scenes.size());
  for (const auto& scene : data.scenes) samples.push_back({scene.features, multi_hot(scene.labels, data.info.num_classes)});
  return samples;
}

}  // namespace dattn
