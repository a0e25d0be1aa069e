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

// End-to-end experiments: train -> attention maps -> merge -> masks -> CRF ->
// evaluation, plus the dropout-rate sweep and the detector-structure ablation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dattn/annotation.hpp"
#include "dattn/attention.hpp"
#include "dattn/crf.hpp"
#include "dattn/dataset.hpp"
#include "dattn/metrics.hpp"
#include "dattn/synthetic.hpp"

namespace dattn {

struct ExperimentSpec {
  SyntheticConfig dataset;
  TrainConfig train;
  Variant variant = Variant::kDecoupled;
  double dropout_rate = 0.5;
  double eps = 0.1;
  MaskThresholds thresholds;
  double tau = 0.8;
  CrfConfig crf;
  bool use_crf = true;
  MergeNormalization merge_normalization = MergeNormalization::kMinMax;
  bool include_background = false;
  std::vector<double> sweep_rates = {0.0, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::uint64_t seed = 7;
  /// Worker threads for per-scene stages; 0 picks the hardware concurrency.
  int workers = 0;

  /// One seed drives dataset generation, initialization and training.
  void set_seed(std::uint64_t s);
  void validate() const;
};

/// Parse a config document. Unknown keys are a ConfigError.
ExperimentSpec experiment_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentSpec& spec);

/// Everything derived from one scene.
struct SceneAnnotation {
  RowMatrixXd A;  // raw Expansive map (N x C); empty for single-stream
  RowMatrixXd S;  // raw Discriminative map (N x C); empty for conventional
  RowMatrixXd T;  // map the merged mask is thresholded from
  Eigen::VectorXd p_hat;
  std::optional<PseudoMask> expansive;
  std::optional<PseudoMask> discriminative;
  PseudoMask merged;
  ProbField unary;
  std::optional<PseudoMask> refined;
};

/// Attention maps and raw masks of one scene, plus the CRF-refined mask when `refine` is set.
SceneAnnotation annotate_scene(const SyntheticScene& scene, const DatasetInfo& info, const ModelParams& params,
                               const ExperimentSpec& spec, bool refine);

/// CRF refinement of a mask given the scene's labels and image.
PseudoMask refine_mask(const PseudoMask& mask, const SyntheticScene& scene, const DatasetInfo& info,
                       const ExperimentSpec& spec);

/// Write maps, unary field and masks of one scene under `dir`.
void write_annotation(const std::filesystem::path& dir, const SyntheticScene& scene, const DatasetInfo& info,
                      const SceneAnnotation& annotation);

struct ColumnScores {
  std::string name;  // expansive, discriminative, merged, refined
  ConfusionTally tally;
  MaskScores scores;
};

struct PipelineReport {
  Variant variant = Variant::kDecoupled;
  std::vector<double> loss_curve;
  std::vector<ColumnScores> columns;

  [[nodiscard]] const ColumnScores* column(std::string_view name) const;
};

nlohmann::json to_json(const PipelineReport& report, const std::vector<std::string>& class_names);
/// Rows mS_prec / mS_rec / mS_IoU, one column per mask kind.
std::string format_report(const PipelineReport& report);

/// Tally masks of the given kind against ground truth; kinds missing for a scene are skipped.
std::vector<ColumnScores> evaluate_annotations(const Dataset& data, const std::vector<SceneAnnotation>& annotations,
                                               bool include_background);

/// Train a fresh model of spec.variant on the dataset.
TrainResult train_model(const Dataset& data, const ExperimentSpec& spec);

/// Annotate every scene with a worker pool; results are in scene order.
std::vector<SceneAnnotation> annotate_dataset(const Dataset& data, const ModelParams& params,
                                              const ExperimentSpec& spec, bool refine);

/// Train, annotate, optionally refine, evaluate. Writes artifacts when `out` is set.
PipelineReport run_pipeline(const Dataset& data, const ExperimentSpec& spec,
                            const std::optional<std::filesystem::path>& out = std::nullopt);

struct SweepRow {
  double rate = 0.0;
  MaskScores merged;
};

/// One model per dropout rate, scored on merged raw masks.
std::vector<SweepRow> run_dropout_sweep(const Dataset& data, const ExperimentSpec& spec);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);
/// Metrics as rows, dropout rates as columns.
std::string format_sweep(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string name;
  MaskScores scores;
};

/// Decoupled (expansive, discriminative, merged), conventional and single-stream models.
std::vector<AblationRow> run_ablation(const Dataset& data, const ExperimentSpec& spec);
nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);
std::string format_ablation(const std::vector<AblationRow>& rows);

/// Run fn(0..count-1) on `workers` threads (0 = hardware concurrency). The
/// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace dattn
