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

#include "dattn/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "dattn/errors.hpp"

namespace dattn {

ConfusionTally& ConfusionTally::operator+=(const ConfusionTally& other) {
  if (other.num_classes() != num_classes()) throw DimensionError("tally class counts differ");
  for (std::size_t c = 0; c < tp.size(); ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  return *this;
}

void accumulate(const PseudoMask& pred, const PseudoMask& gt, ConfusionTally& tally) {
  if (pred.width != gt.width || pred.height != gt.height) throw DimensionError("accumulate: mask extents differ");
  const auto classes = static_cast<std::size_t>(tally.num_classes());
  auto check = [classes](std::uint8_t label) {
    if (label != PseudoMask::kVoid && label >= classes) {
      throw DataError("mask label " + std::to_string(label) + " exceeds the class count");
    }
  };
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const std::uint8_t truth = gt.labels[p];
    const std::uint8_t guess = pred.labels[p];
    check(truth);
    check(guess);
    if (truth == PseudoMask::kVoid) continue;
    if (guess == truth) {
      ++tally.tp[truth];
      continue;
    }
    ++tally.fn[truth];
    if (guess != PseudoMask::kVoid) ++tally.fp[guess];
  }
}

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

double mean_of(const std::vector<ClassScore>& rows, std::optional<double> ClassScore::*field, bool with_bg) {
  double total = 0.0;
  int count = 0;
  for (const ClassScore& row : rows) {
    if (row.label == 0 && !with_bg) continue;
    if (const auto& v = row.*field) {
      total += *v;
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

std::string class_name(int label, const std::vector<std::string>& names) {
  if (label < static_cast<int>(names.size())) return names[static_cast<std::size_t>(label)];
  return "class_" + std::to_string(label);
}

}  // namespace

MaskScores score(const ConfusionTally& tally, bool include_background) {
  MaskScores out;
  out.include_background = include_background;
  for (std::size_t c = 0; c < tally.tp.size(); ++c) {
    const auto tp = tally.tp[c];
    const auto fp = tally.fp[c];
    const auto fn = tally.fn[c];
    out.per_class.push_back({static_cast<int>(c), ratio(tp, tp + fp + fn), ratio(tp, tp + fp), ratio(tp, tp + fn)});
  }
  out.mean_iou = mean_of(out.per_class, &ClassScore::iou, include_background);
  out.mean_precision = mean_of(out.per_class, &ClassScore::precision, include_background);
  out.mean_recall = mean_of(out.per_class, &ClassScore::recall, include_background);
  return out;
}

nlohmann::json to_json(const MaskScores& scores, const std::vector<std::string>& class_names) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const ClassScore& row : scores.per_class) {
    rows.push_back({{"label", row.label},
                    {"name", class_name(row.label, class_names)},
                    {"S_IoU", opt(row.iou)},
                    {"S_prec", opt(row.precision)},
                    {"S_rec", opt(row.recall)}});
  }
  return {{"per_class", rows},
          {"mS_IoU", scores.mean_iou},
          {"mS_prec", scores.mean_precision},
          {"mS_rec", scores.mean_recall},
          {"include_background", scores.include_background}};
}

std::string format_table(const MaskScores& scores, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  char line[128];
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (v) {
      std::snprintf(buf, sizeof buf, "%8.4f", *v);
    } else {
      std::snprintf(buf, sizeof buf, "%8s", "-");
    }
    return std::string(buf);
  };
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s\n", "class", "S_IoU", "S_prec", "S_rec");
  os << line;
  for (const ClassScore& row : scores.per_class) {
    std::snprintf(line, sizeof line, "%-16s", class_name(row.label, class_names).c_str());
    os << line << ' ' << cell(row.iou) << ' ' << cell(row.precision) << ' ' << cell(row.recall) << '\n';
  }
  std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f %8.4f\n", scores.include_background ? "mean" : "mean (fg)",
                scores.mean_iou, scores.mean_precision, scores.mean_recall);
  os << line;
  return os.str();
}

}  // namespace dattn
