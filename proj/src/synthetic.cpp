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

#include "dattn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "dattn/errors.hpp"
#include "dattn/random.hpp"

namespace dattn {
namespace {

constexpr Index kMaxForegroundClasses = 16;
constexpr int kPlacementAttempts = 200;
constexpr int kDistractorBlobs = 2;

struct Ellipse {
  double ci, cj, ri, rj;
  [[nodiscard]] bool contains(Index i, Index j) const {
    const double di = (static_cast<double>(i) - ci) / ri;
    const double dj = (static_cast<double>(j) - cj) / rj;
    return di * di + dj * dj <= 1.0;
  }
};

std::array<double, 3> class_color(int label) {
  static constexpr std::array<std::array<double, 3>, 6> palette = {{
      {200, 60, 60}, {60, 180, 70}, {60, 90, 210}, {210, 200, 60}, {180, 70, 190}, {60, 190, 190}}};
  if (label >= 1 && label <= static_cast<int>(palette.size())) return palette[static_cast<std::size_t>(label - 1)];
  const CounterRng rng(static_cast<std::uint64_t>(label), 0xc01);
  return {40 + 200 * rng.uniform(0), 40 + 200 * rng.uniform(1), 40 + 200 * rng.uniform(2)};
}

/// Pick the class subset for scene `index`: nonempty subsets weighted by the
/// independent-presence probabilities, drawn with a golden-ratio stratified
/// sequence so set frequencies track their probabilities closely.
std::vector<int> draw_label_set(const SyntheticConfig& cfg, Index index) {
  const auto k = static_cast<unsigned>(cfg.num_classes - 1);
  const double base = CounterRng(cfg.seed, 0xb45e).uniform(0);
  const double phi = std::numbers::phi - 1.0;
  double u = std::fmod(base + static_cast<double>(index) * phi, 1.0);

  std::vector<double> weight;
  double total = 0.0;
  for (unsigned s = 1; s < (1u << k); ++s) {
    double w = 1.0;
    for (unsigned c = 0; c < k; ++c) w *= (s >> c) & 1u ? cfg.presence : 1.0 - cfg.presence;
    weight.push_back(w);
    total += w;
  }
  u *= total;
  unsigned chosen = (1u << k) - 1;
  for (unsigned s = 1; s < (1u << k); ++s) {
    u -= weight[s - 1];
    if (u < 0.0) {
      chosen = s;
      break;
    }
  }
  std::vector<int> labels;
  for (unsigned c = 0; c < k; ++c) {
    if ((chosen >> c) & 1u) labels.push_back(static_cast<int>(c) + 1);
  }
  return labels;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (count < 0) throw ConfigError("dataset.count must be nonnegative");
  if (width < 2 || height < 2) throw ConfigError("dataset width and height must be at least 2");
  if (num_classes < 2 || num_classes - 1 > kMaxForegroundClasses) {
    throw ConfigError("dataset.num_classes must be in [2, 17]");
  }
  if (feature_dim < num_classes - 1) throw ConfigError("dataset.feature_dim must be at least num_classes - 1");
  if (static_cast<Index>(class_priors.size()) != num_classes - 1) {
    throw ConfigError("dataset.class_priors needs one entry per foreground class");
  }
  for (double p : class_priors) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("dataset.class_priors entries must be in (0, 1)");
  }
  if (!(presence > 0.0 && presence <= 1.0)) throw ConfigError("dataset.presence must be in (0, 1]");
  if (!(noise_sigma >= 0.0) || !(image_noise >= 0.0)) throw ConfigError("noise levels must be nonnegative");
  const auto presence_given_any = conditional_presence();
  for (std::size_t c = 0; c < class_priors.size(); ++c) {
    if (class_priors[c] / presence_given_any[c] > 0.3) {
      throw ConfigError("dataset.class_priors too large for compact objects at this presence rate");
    }
  }
}

std::vector<std::string> SyntheticConfig::class_names() const {
  std::vector<std::string> names = {"background"};
  for (Index c = 1; c < num_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

std::vector<double> SyntheticConfig::conditional_presence() const {
  const double none = std::pow(1.0 - presence, static_cast<double>(num_classes - 1));
  return std::vector<double>(static_cast<std::size_t>(num_classes - 1), presence / (1.0 - none));
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc) {
  static const std::set<std::string> known = {"count",         "width",        "height",        "num_classes",
                                              "feature_dim",   "noise_sigma",  "class_priors",  "presence",
                                              "body_evidence", "part_evidence", "image_noise",  "seed"};
  if (!doc.is_object()) throw ConfigError("dataset config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("dataset config: unknown key '" + key + "'");
  }
  SyntheticConfig cfg;
  try {
    cfg.count = doc.value("count", cfg.count);
    cfg.width = doc.value("width", cfg.width);
    cfg.height = doc.value("height", cfg.height);
    cfg.num_classes = doc.value("num_classes", cfg.num_classes);
    cfg.feature_dim = doc.value("feature_dim", std::max(cfg.feature_dim, cfg.num_classes - 1 + 5));
    cfg.noise_sigma = doc.value("noise_sigma", cfg.noise_sigma);
    if (doc.contains("class_priors")) {
      cfg.class_priors = doc.at("class_priors").get<std::vector<double>>();
    } else {
      cfg.class_priors.assign(static_cast<std::size_t>(std::max<Index>(cfg.num_classes - 1, 0)), 0.08);
    }
    cfg.presence = doc.value("presence", cfg.presence);
    cfg.body_evidence = doc.value("body_evidence", cfg.body_evidence);
    cfg.part_evidence = doc.value("part_evidence", cfg.part_evidence);
    cfg.image_noise = doc.value("image_noise", cfg.image_noise);
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const SyntheticConfig& cfg) {
  return {{"count", cfg.count},
          {"width", cfg.width},
          {"height", cfg.height},
          {"num_classes", cfg.num_classes},
          {"feature_dim", cfg.feature_dim},
          {"noise_sigma", cfg.noise_sigma},
          {"class_priors", cfg.class_priors},
          {"presence", cfg.presence},
          {"body_evidence", cfg.body_evidence},
          {"part_evidence", cfg.part_evidence},
          {"image_noise", cfg.image_noise},
          {"seed", cfg.seed}};
}

SyntheticScene generate_scene(const SyntheticConfig& cfg, Index index) {
  cfg.validate();
  const Index w = cfg.width;
  const Index h = cfg.height;
  const Index n = w * h;
  auto cur = CounterRng(cfg.seed, 0x5ce0).split(static_cast<std::uint64_t>(index)).cursor();

  SyntheticScene scene;
  char id[32];
  std::snprintf(id, sizeof id, "scene_%04lld", static_cast<long long>(index));
  scene.id = id;
  scene.ground_truth = PseudoMask(w, h, PseudoMask::kBackground);

  const std::vector<int> drawn = draw_label_set(cfg, index);
  const auto presence_given_any = cfg.conditional_presence();
  RowMatrixXd features = RowMatrixXd::Zero(n, cfg.feature_dim);
  RowMatrixXd image(n, 3);

  const std::array<double, 3> bg_color = {95 + 20 * cur.uniform(), 95 + 20 * cur.uniform(), 95 + 20 * cur.uniform()};
  for (Index p = 0; p < n; ++p)
    for (Index k = 0; k < 3; ++k) image(p, k) = bg_color[static_cast<std::size_t>(k)];

  for (int label : drawn) {
    const auto c = static_cast<std::size_t>(label - 1);
    const double area = cfg.class_priors[c] / presence_given_any[c] * cur.uniform(0.75, 1.25) * static_cast<double>(n);
    const double radius = std::sqrt(area / std::numbers::pi);
    const double aspect = std::sqrt(cur.uniform(0.75, 1.33));
    const double ri = std::min(radius * aspect, 0.5 * static_cast<double>(w) - 1.0);
    const double rj = std::min(radius / aspect, 0.5 * static_cast<double>(h) - 1.0);

    Ellipse body{};
    std::vector<Index> pixels;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      body = {cur.uniform(ri, static_cast<double>(w - 1) - ri), cur.uniform(rj, static_cast<double>(h - 1) - rj), ri, rj};
      pixels.clear();
      bool overlaps = false;
      for (Index i = 0; i < w && !overlaps; ++i) {
        for (Index j = 0; j < h; ++j) {
          if (!body.contains(i, j)) continue;
          if (scene.ground_truth(i, j) != PseudoMask::kBackground) {
            overlaps = true;
            break;
          }
          pixels.push_back(i * h + j);
        }
      }
      if (!overlaps && !pixels.empty()) break;
      // last attempt keeps its placement and paints over earlier objects
      if (attempt + 1 == kPlacementAttempts) {
        pixels.clear();
        for (Index i = 0; i < w; ++i)
          for (Index j = 0; j < h; ++j)
            if (body.contains(i, j)) pixels.push_back(i * h + j);
      }
    }

    // strong-evidence part: a smaller ellipse inside the body
    const double angle = cur.uniform(0.0, 2.0 * std::numbers::pi);
    const double offset = 0.4 * cur.uniform();
    const Ellipse part{body.ci + offset * ri * std::cos(angle), body.cj + offset * rj * std::sin(angle), 0.45 * ri,
                       0.45 * rj};

    const std::array<double, 3> base = class_color(label);
    const std::array<double, 3> color = {base[0] + cur.uniform(-10, 10), base[1] + cur.uniform(-10, 10),
                                         base[2] + cur.uniform(-10, 10)};
    const Index channel = label - 1;
    for (Index p : pixels) {
      // earlier object losing this pixel gives up its evidence
      const std::uint8_t previous = scene.ground_truth.labels[static_cast<std::size_t>(p)];
      if (previous != PseudoMask::kBackground) features(p, previous - 1) = 0.0;
      scene.ground_truth.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(label);
      features(p, channel) = part.contains(p / h, p % h) ? cfg.part_evidence : cfg.body_evidence;
      for (Index k = 0; k < 3; ++k) image(p, k) = color[static_cast<std::size_t>(k)];
    }
  }

  for (Index ch = cfg.num_classes - 1; ch < cfg.feature_dim; ++ch) {
    for (int blob = 0; blob < kDistractorBlobs; ++blob) {
      const double ci = cur.uniform(0.0, static_cast<double>(w - 1));
      const double cj = cur.uniform(0.0, static_cast<double>(h - 1));
      const double sigma = cur.uniform(3.0, 8.0);
      const double amplitude = cur.uniform(0.3, 0.8);
      for (Index p = 0; p < n; ++p) {
        const double di = static_cast<double>(p / h) - ci;
        const double dj = static_cast<double>(p % h) - cj;
        features(p, ch) += amplitude * std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      }
    }
  }

  for (Index p = 0; p < n; ++p) {
    for (Index d = 0; d < cfg.feature_dim; ++d) {
      features(p, d) = std::max(0.0, features(p, d) + cfg.noise_sigma * cur.normal());
    }
    for (Index k = 0; k < 3; ++k) image(p, k) = std::clamp(image(p, k) + cfg.image_noise * cur.normal(), 0.0, 255.0);
  }

  std::set<int> present;
  for (std::uint8_t m : scene.ground_truth.labels) {
    if (m != PseudoMask::kBackground) present.insert(m);
  }
  scene.labels.assign(present.begin(), present.end());
  scene.features = FeatureMap(w, h, features);
  scene.image = std::move(image);
  return scene;
}

Eigen::VectorXd multi_hot(const std::vector<int>& labels, Index num_classes) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(num_classes - 1);
  for (int c : labels) {
    if (c < 1 || c >= num_classes) throw DataError("label " + std::to_string(c) + " out of range");
    y[c - 1] = 1.0;
  }
  return y;
}

}  // namespace dattn
