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

#include "dattn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"

namespace dattn {
namespace {

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

MergeNormalization parse_normalization(const std::string& name) {
  if (name == "minmax") return MergeNormalization::kMinMax;
  if (name == "spatial-sum") return MergeNormalization::kSpatialSum;
  throw ConfigError("merge_normalization must be 'minmax' or 'spatial-sum'");
}

const char* normalization_name(MergeNormalization mode) {
  return mode == MergeNormalization::kMinMax ? "minmax" : "spatial-sum";
}

}  // namespace

void ExperimentSpec::set_seed(std::uint64_t s) {
  seed = s;
  dataset.seed = s;
  train.seed = s;
}

void ExperimentSpec::validate() const {
  dataset.validate();
  train.validate();
  crf.validate();
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(tau > 0.5 && tau < 1.0)) throw ConfigError("tau must be in (0.5, 1)");
  for (double r : sweep_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("sweep rates must be in [0, 1)");
  }
  if (workers < 0) throw ConfigError("workers must be nonnegative");
}

ExperimentSpec experiment_from_json(const nlohmann::json& doc) {
  reject_unknown(doc,
                 {"seed", "workers", "dataset", "train", "model", "thresholds", "tau", "crf", "use_crf",
                  "merge_normalization", "include_background", "sweep_rates"},
                 "config");
  ExperimentSpec spec;
  try {
    if (doc.contains("dataset")) spec.dataset = synthetic_config_from_json(doc.at("dataset"));
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      reject_unknown(t, {"batch_size", "lr_attention", "lr_backbonelike", "lr_decay_factor", "decay_epoch",
                         "total_epochs", "hflip"},
                     "config.train");
      spec.train.batch_size = t.value("batch_size", spec.train.batch_size);
      spec.train.lr_attention = t.value("lr_attention", spec.train.lr_attention);
      spec.train.lr_backbonelike = t.value("lr_backbonelike", spec.train.lr_backbonelike);
      spec.train.lr_decay_factor = t.value("lr_decay_factor", spec.train.lr_decay_factor);
      spec.train.decay_epoch = t.value("decay_epoch", spec.train.decay_epoch);
      spec.train.total_epochs = t.value("total_epochs", spec.train.total_epochs);
      spec.train.hflip = t.value("hflip", spec.train.hflip);
    }
    if (doc.contains("model")) {
      const auto& m = doc.at("model");
      reject_unknown(m, {"variant", "dropout_rate", "eps"}, "config.model");
      if (m.contains("variant")) spec.variant = parse_variant(m.at("variant").get<std::string>());
      spec.dropout_rate = m.value("dropout_rate", spec.dropout_rate);
      spec.eps = m.value("eps", spec.eps);
    }
    if (doc.contains("thresholds")) {
      const auto& t = doc.at("thresholds");
      reject_unknown(t, {"foreground", "background"}, "config.thresholds");
      spec.thresholds.foreground = t.value("foreground", spec.thresholds.foreground);
      spec.thresholds.background = t.value("background", spec.thresholds.background);
    }
    if (doc.contains("crf")) spec.crf = crf_config_from_json(doc.at("crf"));
    spec.tau = doc.value("tau", spec.tau);
    spec.use_crf = doc.value("use_crf", spec.use_crf);
    if (doc.contains("merge_normalization")) {
      spec.merge_normalization = parse_normalization(doc.at("merge_normalization").get<std::string>());
    }
    spec.include_background = doc.value("include_background", spec.include_background);
    if (doc.contains("sweep_rates")) spec.sweep_rates = doc.at("sweep_rates").get<std::vector<double>>();
    spec.workers = doc.value("workers", spec.workers);
    spec.set_seed(doc.value("seed", spec.seed));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  return {{"seed", spec.seed},
          {"workers", spec.workers},
          {"dataset", to_json(spec.dataset)},
          {"train",
           {{"batch_size", spec.train.batch_size},
            {"lr_attention", spec.train.lr_attention},
            {"lr_backbonelike", spec.train.lr_backbonelike},
            {"lr_decay_factor", spec.train.lr_decay_factor},
            {"decay_epoch", spec.train.decay_epoch},
            {"total_epochs", spec.train.total_epochs},
            {"hflip", spec.train.hflip}}},
          {"model", {{"variant", std::string(to_string(spec.variant))}, {"dropout_rate", spec.dropout_rate}, {"eps", spec.eps}}},
          {"thresholds", {{"foreground", spec.thresholds.foreground}, {"background", spec.thresholds.background}}},
          {"tau", spec.tau},
          {"crf", to_json(spec.crf)},
          {"use_crf", spec.use_crf},
          {"merge_normalization", normalization_name(spec.merge_normalization)},
          {"include_background", spec.include_background},
          {"sweep_rates", spec.sweep_rates}};
}

PseudoMask refine_mask(const PseudoMask& mask, const SyntheticScene& scene, const DatasetInfo& info,
                       const ExperimentSpec& spec) {
  const ProbField unary = build_unary(mask, scene.labels, info.num_classes, spec.tau);
  return argmax_mask(mean_field(unary, scene.image, spec.crf));
}

SceneAnnotation annotate_scene(const SyntheticScene& scene, const DatasetInfo& info, const ModelParams& params,
                               const ExperimentSpec& spec, bool refine) {
  // annotation maps come from the inference-mode model (dropout off)
  const ForwardOutputs fo = forward(scene.features, params, false, 0);
  const MergeNormalization mode = spec.merge_normalization;
  SceneAnnotation out;
  out.p_hat = fo.p_hat;
  switch (params.variant) {
    case Variant::kDecoupled: {
      out.A = fo.A;
      out.S = fo.S;
      const RowMatrixXd a = normalize_per_class(fo.A, mode);
      const RowMatrixXd s = normalize_per_class(fo.S, mode);
      out.T = merge_attention(a, s, fo.p_hat);
      out.expansive = generate_mask(a, scene.features, scene.labels, spec.thresholds);
      out.discriminative = generate_mask(s, scene.features, scene.labels, spec.thresholds);
      break;
    }
    case Variant::kConventional: {
      // one class-agnostic map shared by every class
      out.A = fo.A.replicate(1, params.num_classes());
      out.T = normalize_per_class(out.A, mode);
      out.expansive = generate_mask(out.T, scene.features, scene.labels, spec.thresholds);
      break;
    }
    case Variant::kSingleStream: {
      out.S = fo.S;
      out.T = normalize_per_class(fo.S, mode);
      out.discriminative = generate_mask(out.T, scene.features, scene.labels, spec.thresholds);
      break;
    }
  }
  out.merged = generate_mask(out.T, scene.features, scene.labels, spec.thresholds);
  out.unary = build_unary(out.merged, scene.labels, info.num_classes, spec.tau);
  if (refine) out.refined = argmax_mask(mean_field(out.unary, scene.image, spec.crf));
  return out;
}

void write_annotation(const std::filesystem::path& dir, const SyntheticScene& scene, const DatasetInfo& info,
                      const SceneAnnotation& annotation) {
  const Index w = info.width;
  const Index h = info.height;
  auto map_meta = [&](const char* role) {
    return nlohmann::json{{"axes", {"width", "height", "class"}},
                          {"role", role},
                          {"class_names", std::vector<std::string>(info.class_names.begin() + 1, info.class_names.end())}};
  };
  if (annotation.A.size() > 0) io::write_dten_with_sidecar(dir / (scene.id + ".A.dten"), Tensor::from_map(w, h, annotation.A), map_meta("expansive_attention"));
  if (annotation.S.size() > 0) io::write_dten_with_sidecar(dir / (scene.id + ".S.dten"), Tensor::from_map(w, h, annotation.S), map_meta("discriminative_attention"));
  io::write_dten_with_sidecar(dir / (scene.id + ".T.dten"), Tensor::from_map(w, h, annotation.T), map_meta("merged_attention"));
  io::write_dten_with_sidecar(dir / (scene.id + ".unary.dten"), Tensor::from_map(w, h, annotation.unary.z),
                              {{"axes", {"width", "height", "class"}},
                               {"role", "unary_probabilities"},
                               {"tau", annotation.unary.tau},
                               {"present", annotation.unary.present},
                               {"class_names", info.class_names}});
  if (annotation.expansive) write_mask(dir / (scene.id + ".expansive.mask"), *annotation.expansive, info.class_names);
  if (annotation.discriminative) {
    write_mask(dir / (scene.id + ".discriminative.mask"), *annotation.discriminative, info.class_names);
  }
  write_mask(dir / (scene.id + ".merged.mask"), annotation.merged, info.class_names);
  if (annotation.refined) write_mask(dir / (scene.id + ".refined.mask"), *annotation.refined, info.class_names);
}

const ColumnScores* PipelineReport::column(std::string_view name) const {
  for (const auto& c : columns) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::vector<ColumnScores> evaluate_annotations(const Dataset& data, const std::vector<SceneAnnotation>& annotations,
                                               bool include_background) {
  if (annotations.size() != data.scenes.size()) throw DimensionError("one annotation per scene required");
  using Getter = const PseudoMask* (*)(const SceneAnnotation&);
  const std::vector<std::pair<std::string, Getter>> kinds = {
      {"expansive", [](const SceneAnnotation& a) { return a.expansive ? &*a.expansive : nullptr; }},
      {"discriminative", [](const SceneAnnotation& a) { return a.discriminative ? &*a.discriminative : nullptr; }},
      {"merged", [](const SceneAnnotation& a) -> const PseudoMask* { return &a.merged; }},
      {"refined", [](const SceneAnnotation& a) { return a.refined ? &*a.refined : nullptr; }},
  };
  std::vector<ColumnScores> columns;
  for (const auto& [name, get] : kinds) {
    ConfusionTally tally(data.info.num_classes);
    bool any = false;
    for (std::size_t k = 0; k < annotations.size(); ++k) {
      if (const PseudoMask* mask = get(annotations[k])) {
        accumulate(*mask, data.scenes[k].ground_truth, tally);
        any = true;
      }
    }
    if (any) columns.push_back({name, tally, score(tally, include_background)});
  }
  return columns;
}

TrainResult train_model(const Dataset& data, const ExperimentSpec& spec) {
  ModelParams init = init_params(spec.variant, data.info.feature_dim, data.info.num_classes - 1, spec.seed,
                                 spec.dropout_rate, spec.eps);
  init.class_names.assign(data.info.class_names.begin() + 1, data.info.class_names.end());
  const std::vector<Sample> samples = training_samples(data);
  TrainConfig cfg = spec.train;
  cfg.seed = spec.seed;
  return train(samples, cfg, std::move(init));
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex guard;
  std::size_t failed_at = count;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard lock(guard);
            if (k < failed_at) {
              failed_at = k;
              failure = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<SceneAnnotation> annotate_dataset(const Dataset& data, const ModelParams& params,
                                              const ExperimentSpec& spec, bool refine) {
  std::vector<SceneAnnotation> out(data.scenes.size());
  parallel_for(data.scenes.size(), spec.workers,
               [&](std::size_t k) { out[k] = annotate_scene(data.scenes[k], data.info, params, spec, refine); });
  return out;
}

PipelineReport run_pipeline(const Dataset& data, const ExperimentSpec& spec,
                            const std::optional<std::filesystem::path>& out) {
  spec.validate();
  if (data.scenes.empty()) throw DataError("dataset has no scenes");
  TrainResult trained = train_model(data, spec);
  std::vector<SceneAnnotation> annotations = annotate_dataset(data, trained.params, spec, spec.use_crf);

  PipelineReport report;
  report.variant = spec.variant;
  report.loss_curve = trained.loss_curve;
  report.columns = evaluate_annotations(data, annotations, spec.include_background);

  if (out) {
    save_checkpoint(*out / "model", trained.params);
    io::write_json(*out / "train_log.json", {{"loss_curve", trained.loss_curve}});
    parallel_for(data.scenes.size(), spec.workers, [&](std::size_t k) {
      write_annotation(*out / "annotations", data.scenes[k], data.info, annotations[k]);
    });
    io::write_json(*out / "report.json", to_json(report, data.info.class_names));
    io::write_bytes(*out / "report.txt", format_report(report));
  }
  return report;
}

nlohmann::json to_json(const PipelineReport& report, const std::vector<std::string>& class_names) {
  nlohmann::json columns = nlohmann::json::object();
  for (const auto& c : report.columns) {
    columns[c.name] = to_json(c.scores, class_names);
    columns[c.name]["tally"] = {{"tp", c.tally.tp}, {"fp", c.tally.fp}, {"fn", c.tally.fn}};
  }
  return {{"variant", std::string(to_string(report.variant))}, {"loss_curve", report.loss_curve}, {"columns", columns}};
}

namespace {

std::string metric_rows(const std::vector<std::string>& headers, const std::vector<const MaskScores*>& cols,
                        const char* corner) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s", corner);
  os << buf;
  for (const auto& h : headers) {
    std::snprintf(buf, sizeof buf, " %14s", h.c_str());
    os << buf;
  }
  os << '\n';
  const std::pair<const char*, double MaskScores::*> metrics[] = {
      {"mS_prec", &MaskScores::mean_precision}, {"mS_rec", &MaskScores::mean_recall}, {"mS_IoU", &MaskScores::mean_iou}};
  for (const auto& [label, field] : metrics) {
    std::snprintf(buf, sizeof buf, "%-8s", label);
    os << buf;
    for (const MaskScores* s : cols) {
      std::snprintf(buf, sizeof buf, " %14.1f", 100.0 * (s->*field));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string format_report(const PipelineReport& report) {
  std::vector<std::string> headers;
  std::vector<const MaskScores*> cols;
  for (const auto& c : report.columns) {
    headers.push_back(c.name);
    cols.push_back(&c.scores);
  }
  return "variant: " + std::string(to_string(report.variant)) + "\n" + metric_rows(headers, cols, "");
}

std::vector<SweepRow> run_dropout_sweep(const Dataset& data, const ExperimentSpec& spec) {
  spec.validate();
  if (data.scenes.empty()) throw DataError("dataset has no scenes");
  std::vector<SweepRow> rows;
  for (double rate : spec.sweep_rates) {
    ExperimentSpec run = spec;
    run.variant = Variant::kDecoupled;
    run.dropout_rate = rate;
    const TrainResult trained = train_model(data, run);
    const auto annotations = annotate_dataset(data, trained.params, run, false);
    const auto columns = evaluate_annotations(data, annotations, run.include_background);
    for (const auto& c : columns) {
      if (c.name == "merged") rows.push_back({rate, c.scores});
    }
  }
  return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"dropout_rate", r.rate},
                   {"mS_prec", r.merged.mean_precision},
                   {"mS_rec", r.merged.mean_recall},
                   {"mS_IoU", r.merged.mean_iou}});
  }
  return out;
}

std::string format_sweep(const std::vector<SweepRow>& rows) {
  std::vector<std::string> headers;
  std::vector<const MaskScores*> cols;
  for (const auto& r : rows) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%g", r.rate);
    headers.emplace_back(buf);
    cols.push_back(&r.merged);
  }
  return metric_rows(headers, cols, "DR");
}

std::vector<AblationRow> run_ablation(const Dataset& data, const ExperimentSpec& spec) {
  spec.validate();
  if (data.scenes.empty()) throw DataError("dataset has no scenes");
  std::vector<AblationRow> rows;
  for (Variant v : {Variant::kDecoupled, Variant::kConventional, Variant::kSingleStream}) {
    ExperimentSpec run = spec;
    run.variant = v;
    const TrainResult trained = train_model(data, run);
    const auto annotations = annotate_dataset(data, trained.params, run, false);
    for (const auto& c : evaluate_annotations(data, annotations, run.include_background)) {
      if (v == Variant::kDecoupled) {
        rows.push_back({"decoupled/" + c.name, c.scores});
      } else if (c.name == "merged") {
        rows.push_back({std::string(to_string(v)), c.scores});
      }
    }
  }
  return rows;
}

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"model", r.name},
                   {"mS_prec", r.scores.mean_precision},
                   {"mS_rec", r.scores.mean_recall},
                   {"mS_IoU", r.scores.mean_iou}});
  }
  return out;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::vector<std::string> headers;
  std::vector<const MaskScores*> cols;
  for (const auto& r : rows) {
    headers.push_back(r.name);
    cols.push_back(&r.scores);
  }
  return metric_rows(headers, cols, "");
}

}  // namespace dattn
