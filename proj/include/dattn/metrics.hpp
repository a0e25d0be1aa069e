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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dattn/annotation.hpp"

namespace dattn {

/// Per-class pixel counts accumulated over a mask set. Tallies form a
/// commutative monoid under operator+=.
struct ConfusionTally {
  std::vector<std::int64_t> tp, fp, fn;

  ConfusionTally() = default;
  explicit ConfusionTally(Index num_classes)
      : tp(static_cast<std::size_t>(num_classes)), fp(tp.size()), fn(tp.size()) {}

  [[nodiscard]] Index num_classes() const { return static_cast<Index>(tp.size()); }
  ConfusionTally& operator+=(const ConfusionTally& other);
  friend ConfusionTally operator+(ConfusionTally a, const ConfusionTally& b) { return a += b; }
  friend bool operator==(const ConfusionTally&, const ConfusionTally&) = default;
};

/// Add one prediction/ground-truth pair. Ground-truth void pixels are skipped;
/// a void prediction counts as a miss for the true class. Labels at or above
/// the tally's class count (other than void) are a DataError.
void accumulate(const PseudoMask& pred, const PseudoMask& gt, ConfusionTally& tally);

struct ClassScore {
  int label = 0;
  std::optional<double> iou, precision, recall;  // empty on a zero denominator
};

struct MaskScores {
  std::vector<ClassScore> per_class;
  double mean_iou = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  bool include_background = false;
};

/// Per-class S_IoU = tp/(tp+fp+fn), S_prec = tp/(tp+fp), S_rec = tp/(tp+fn) and
/// their unweighted means. Classes with a zero denominator are left out of the
/// corresponding mean. Background (label 0) is scored but only averaged when
/// `include_background` is set.
MaskScores score(const ConfusionTally& tally, bool include_background = false);

nlohmann::json to_json(const MaskScores& scores, const std::vector<std::string>& class_names = {});

/// Aligned plain-text table: one row per class, mean footer.
std::string format_table(const MaskScores& scores, const std::vector<std::string>& class_names = {});

}  // namespace dattn
