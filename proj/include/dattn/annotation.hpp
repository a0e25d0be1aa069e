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

// Attention maps -> pseudo-annotation masks -> CRF unary probabilities.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dattn/attention.hpp"
#include "dattn/tensor.hpp"

namespace dattn {

/// W x H label grid: 0 is background, 1..C-1 foreground classes, kVoid undecided.
struct PseudoMask {
  static constexpr std::uint8_t kBackground = 0;
  static constexpr std::uint8_t kVoid = 255;

  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> labels;  // pixel (i, j) at i*height + j

  PseudoMask() = default;
  PseudoMask(Index w, Index h, std::uint8_t fill = kVoid)
      : width(w), height(h), labels(static_cast<std::size_t>(w * h), fill) {}

  [[nodiscard]] Index pixels() const { return width * height; }
  std::uint8_t& operator()(Index i, Index j) { return labels[static_cast<std::size_t>(i * height + j)]; }
  std::uint8_t operator()(Index i, Index j) const { return labels[static_cast<std::size_t>(i * height + j)]; }
  friend bool operator==(const PseudoMask&, const PseudoMask&) = default;
};

/// Per-pixel class probability vectors over every dataset class.
struct ProbField {
  Index width = 0;
  Index height = 0;
  double tau = 0.0;
  std::vector<int> present;  // classes of the image, ascending, background first
  RowMatrixXd z;             // (W*H) x num_classes

  [[nodiscard]] Index num_classes() const { return z.cols(); }
};

/// (x - min) / (max - min); a constant input maps to all zeros.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> minmax_normalize(const Eigen::DenseBase<Derived>& map) {
  using Scalar = typename Derived::Scalar;
  const auto flat = map.derived().reshaped().array().eval();
  const Scalar lo = flat.minCoeff();
  const Scalar hi = flat.maxCoeff();
  if (!(hi > lo)) return decltype(flat)::Zero(flat.size());
  return (flat - lo) / (hi - lo);
}

enum class MergeNormalization {
  kMinMax,      // per class to [0, 1]
  kSpatialSum,  // per class to unit mass, shifted to nonnegative first if needed
};

/// Normalize every column of an N x C map independently.
RowMatrixXd normalize_per_class(const Eigen::Ref<const RowMatrixXd>& maps, MergeNormalization mode);

/// T_c = p_hat_c * A_c + (1 - p_hat_c) * S_c with A and S already normalized.
RowMatrixXd merge_attention(const Eigen::Ref<const RowMatrixXd>& A, const Eigen::Ref<const RowMatrixXd>& S,
                            const Eigen::Ref<const Eigen::VectorXd>& p_hat);

struct MaskThresholds {
  double foreground = 0.2;  // normalized attention strictly above
  double background = 0.3;  // normalized feature energy strictly below
};

/// Threshold per-class maps into a mask. Column c of `T` belongs to mask label
/// c + 1; `labels` lists the image's foreground labels. Overlapping claims go
/// to the class with the smallest candidate set (lowest label on ties);
/// foreground beats background; unclaimed pixels are void.
PseudoMask generate_mask(const Eigen::Ref<const RowMatrixXd>& T, const FeatureMap& X, std::span<const int> labels,
                         const MaskThresholds& thresholds = {});

/// Pixels whose normalized map value exceeds `threshold`.
std::vector<bool> foreground_candidates(const Eigen::Ref<const Eigen::VectorXd>& map, double threshold);

/// Pixels whose normalized channel-sum of X is below `threshold`.
std::vector<bool> background_candidates(const FeatureMap& X, double threshold);

/// Unary probability vectors: void pixels are uniform over the present
/// classes, labeled pixels put tau on their label and share 1 - tau among
/// the other present classes. Background is always treated as present.
ProbField build_unary(const PseudoMask& mask, std::span<const int> present, Index num_classes, double tau);

/// Raw 8-bit raster plus a JSON sidecar with width, height, void code and class names.
void write_mask(const std::filesystem::path& path, const PseudoMask& mask,
                const std::vector<std::string>& class_names = {});
PseudoMask read_mask(const std::filesystem::path& path);

}  // namespace dattn
