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

#include "dattn/annotation.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"

namespace dattn {

RowMatrixXd normalize_per_class(const Eigen::Ref<const RowMatrixXd>& maps, MergeNormalization mode) {
  RowMatrixXd out(maps.rows(), maps.cols());
  for (Index c = 0; c < maps.cols(); ++c) {
    if (mode == MergeNormalization::kMinMax) {
      out.col(c) = minmax_normalize(maps.col(c)).matrix();
      continue;
    }
    const double lo = std::min(maps.col(c).minCoeff(), 0.0);
    const Eigen::VectorXd shifted = maps.col(c).array() - lo;
    const double mass = shifted.sum();
    out.col(c) = mass > 0.0 ? Eigen::VectorXd(shifted / mass) : Eigen::VectorXd::Zero(maps.rows());
  }
  return out;
}

RowMatrixXd merge_attention(const Eigen::Ref<const RowMatrixXd>& A, const Eigen::Ref<const RowMatrixXd>& S,
                            const Eigen::Ref<const Eigen::VectorXd>& p_hat) {
  if (A.rows() != S.rows() || A.cols() != S.cols()) throw DimensionError("merge_attention: A and S differ in shape");
  if (p_hat.size() != A.cols()) throw DimensionError("merge_attention: p_hat length must equal C");
  RowMatrixXd T(A.rows(), A.cols());
  for (Index c = 0; c < A.cols(); ++c) {
    const double weight = p_hat[c];
    if (!(weight >= 0.0 && weight <= 1.0)) throw ContractError("merge_attention: p_hat entries must lie in [0, 1]");
    T.col(c) = weight * A.col(c) + (1.0 - weight) * S.col(c);
  }
  return T;
}

std::vector<bool> foreground_candidates(const Eigen::Ref<const Eigen::VectorXd>& map, double threshold) {
  const Eigen::ArrayXd norm = minmax_normalize(map);
  std::vector<bool> in(static_cast<std::size_t>(norm.size()));
  for (Index p = 0; p < norm.size(); ++p) in[static_cast<std::size_t>(p)] = norm[p] > threshold;
  return in;
}

std::vector<bool> background_candidates(const FeatureMap& X, double threshold) {
  const Eigen::VectorXd energy = X.matrix().rowwise().sum();
  const Eigen::ArrayXd norm = minmax_normalize(energy);
  std::vector<bool> in(static_cast<std::size_t>(norm.size()));
  for (Index p = 0; p < norm.size(); ++p) in[static_cast<std::size_t>(p)] = norm[p] < threshold;
  return in;
}

PseudoMask generate_mask(const Eigen::Ref<const RowMatrixXd>& T, const FeatureMap& X, std::span<const int> labels,
                         const MaskThresholds& thresholds) {
  if (labels.empty()) throw ContractError("generate_mask: image label set is empty");
  if (T.rows() != X.pixels()) throw DimensionError("generate_mask: attention map and features differ in size");
  const std::set<int> classes(labels.begin(), labels.end());
  for (int c : classes) {
    if (c < 1 || c > T.cols() || c >= PseudoMask::kVoid) {
      throw ContractError("generate_mask: label " + std::to_string(c) + " has no attention channel");
    }
  }

  struct Candidate {
    int label;
    std::vector<bool> pixels;
    std::size_t size;
  };
  std::vector<Candidate> candidates;
  for (int c : classes) {
    auto pixels = foreground_candidates(T.col(c - 1), thresholds.foreground);
    const auto size = static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), true));
    candidates.push_back({c, std::move(pixels), size});
  }
  const std::vector<bool> background = background_candidates(X, thresholds.background);

  PseudoMask mask(X.width(), X.height());
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    const Candidate* best = nullptr;
    // ascending label order, so strict < keeps the lowest label on ties
    for (const Candidate& cand : candidates) {
      if (cand.pixels[p] && (best == nullptr || cand.size < best->size)) best = &cand;
    }
    if (best != nullptr) {
      mask.labels[p] = static_cast<std::uint8_t>(best->label);
    } else if (background[p]) {
      mask.labels[p] = PseudoMask::kBackground;
    }
  }
  return mask;
}

ProbField build_unary(const PseudoMask& mask, std::span<const int> present, Index num_classes, double tau) {
  if (!(tau > 0.5 && tau < 1.0)) throw ContractError("build_unary: tau must lie in (0.5, 1)");
  std::set<int> in_image(present.begin(), present.end());
  in_image.insert(PseudoMask::kBackground);
  for (int c : in_image) {
    if (c < 0 || c >= num_classes) throw ContractError("build_unary: class " + std::to_string(c) + " out of range");
  }
  const auto k = static_cast<double>(in_image.size());
  if (in_image.size() < 2) throw ContractError("build_unary: at least one foreground class must be present");

  ProbField field;
  field.width = mask.width;
  field.height = mask.height;
  field.tau = tau;
  field.present.assign(in_image.begin(), in_image.end());
  field.z = RowMatrixXd::Zero(mask.pixels(), num_classes);

  const double uniform = 1.0 / k;
  const double other = (1.0 - tau) / (k - 1.0);
  for (Index p = 0; p < mask.pixels(); ++p) {
    const int m = mask.labels[static_cast<std::size_t>(p)];
    if (m == PseudoMask::kVoid) {
      for (int c : field.present) field.z(p, c) = uniform;
      continue;
    }
    if (!in_image.contains(m)) {
      throw ContractError("build_unary: mask label " + std::to_string(m) + " is not among the present classes");
    }
    for (int c : field.present) field.z(p, c) = c == m ? tau : other;
  }
  return field;
}

void write_mask(const std::filesystem::path& path, const PseudoMask& mask, const std::vector<std::string>& class_names) {
  if (static_cast<Index>(mask.labels.size()) != mask.pixels()) throw DimensionError("mask label count mismatch");
  io::write_bytes(path, std::string_view(reinterpret_cast<const char*>(mask.labels.data()), mask.labels.size()));
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < class_names.size(); ++c) classes[std::to_string(c)] = class_names[c];
  io::write_json(io::sidecar_path(path), {{"width", mask.width},
                                          {"height", mask.height},
                                          {"void", PseudoMask::kVoid},
                                          {"classes", classes}});
}

PseudoMask read_mask(const std::filesystem::path& path) {
  const nlohmann::json meta = io::read_json(io::sidecar_path(path));
  Index width = 0;
  Index height = 0;
  try {
    width = meta.at("width").get<Index>();
    height = meta.at("height").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad mask sidecar: " + e.what());
  }
  const std::string bytes = io::read_bytes(path);
  if (width <= 0 || height <= 0 || static_cast<Index>(bytes.size()) != width * height) {
    throw DataError(path.string() + ": mask size does not match its sidecar");
  }
  PseudoMask mask(width, height);
  std::copy(bytes.begin(), bytes.end(), reinterpret_cast<char*>(mask.labels.data()));
  return mask;
}

}  // namespace dattn
