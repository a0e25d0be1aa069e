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

#include "dattn/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"
#include "dattn/experiment.hpp"

namespace dattn {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string model;
  std::string masks;
  std::optional<double> dropout;
  std::optional<double> tau;
  std::optional<double> thr_fg;
  std::optional<double> thr_bg;
  std::optional<int> crf_iters;
  std::optional<std::string> variant;
  std::optional<long long> count;
  std::optional<int> workers;
  bool no_crf = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for generation, initialization and training");
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--workers", o.workers, "Worker threads for per-scene stages (0 = all cores)");
}

void add_data(CLI::App* cmd, Options& o) {
  cmd->add_option("--data", o.data, "Dataset directory (manifest.json)")->required();
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--variant", o.variant, "decoupled | conventional | single-stream");
  cmd->add_option("--dropout", o.dropout, "Dropout rate around the attention conv");
}

void add_mask_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--thr-fg", o.thr_fg, "Foreground threshold on normalized attention");
  cmd->add_option("--thr-bg", o.thr_bg, "Background threshold on normalized feature energy");
}

void add_crf_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--tau", o.tau, "Unary confidence on the mask label, in (0.5, 1)");
  cmd->add_option("--crf-iters", o.crf_iters, "Mean-field iterations");
  cmd->add_flag("--no-crf", o.no_crf, "Skip CRF refinement");
}

ExperimentSpec resolve_spec(const Options& o) {
  ExperimentSpec spec;
  if (!o.config.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(io::read_bytes(o.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(o.config + ": " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    spec = experiment_from_json(doc);
  }
  if (o.seed) spec.set_seed(*o.seed);
  if (o.dropout) spec.dropout_rate = *o.dropout;
  if (o.tau) spec.tau = *o.tau;
  if (o.thr_fg) spec.thresholds.foreground = *o.thr_fg;
  if (o.thr_bg) spec.thresholds.background = *o.thr_bg;
  if (o.crf_iters) spec.crf.n_iters = *o.crf_iters;
  if (o.variant) spec.variant = parse_variant(*o.variant);
  if (o.count) spec.dataset.count = *o.count;
  if (o.workers) spec.workers = *o.workers;
  if (o.no_crf) spec.use_crf = false;
  spec.validate();
  return spec;
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int cmd_gen(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  gen_synthetic(spec.dataset, o.out);
  out << "wrote " << spec.dataset.count << " scenes to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  if (data.scenes.empty()) throw DataError("dataset has no scenes");
  const Stopwatch clock;
  const TrainResult trained = train_model(data, spec);
  save_checkpoint(fs::path(o.out) / "model", trained.params);
  io::write_json(fs::path(o.out) / "train_log.json", {{"loss_curve", trained.loss_curve}});
  out << "trained " << to_string(spec.variant) << " model in " << clock.seconds() << " s, final loss "
      << trained.loss_curve.back() << '\n';
  return kExitOk;
}

int cmd_annotate(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const ModelParams params = load_checkpoint(o.model);
  if (params.feature_dim() != data.info.feature_dim || params.num_classes() != data.info.num_classes - 1) {
    throw DataError("model does not match the dataset's feature depth or class count");
  }
  const auto annotations = annotate_dataset(data, params, spec, false);
  parallel_for(data.scenes.size(), spec.workers,
               [&](std::size_t k) { write_annotation(o.out, data.scenes[k], data.info, annotations[k]); });
  out << "annotated " << data.scenes.size() << " scenes into " << o.out << '\n';
  return kExitOk;
}

int cmd_refine(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const fs::path source = o.masks;
  parallel_for(data.scenes.size(), spec.workers, [&](std::size_t k) {
    const SyntheticScene& scene = data.scenes[k];
    const PseudoMask raw = read_mask(source / (scene.id + ".merged.mask"));
    const PseudoMask refined = spec.use_crf ? refine_mask(raw, scene, data.info, spec) : raw;
    write_mask(fs::path(o.out) / (scene.id + ".refined.mask"), refined, data.info.class_names);
  });
  out << "refined " << data.scenes.size() << " masks into " << o.out << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const fs::path source = o.masks;
  PipelineReport report;
  report.variant = spec.variant;
  for (const char* kind : {"expansive", "discriminative", "merged", "refined"}) {
    ConfusionTally tally(data.info.num_classes);
    std::size_t found = 0;
    for (const auto& scene : data.scenes) {
      const fs::path path = source / (scene.id + "." + kind + ".mask");
      if (!fs::exists(path)) continue;
      accumulate(read_mask(path), scene.ground_truth, tally);
      ++found;
    }
    if (found == 0) continue;
    if (found != data.scenes.size()) throw DataError(std::string("some scenes lack a ") + kind + " mask");
    report.columns.push_back({kind, tally, score(tally, spec.include_background)});
  }
  if (report.columns.empty()) throw DataError("no masks found in " + source.string());
  nlohmann::json doc = to_json(report, data.info.class_names);
  doc.erase("loss_curve");
  doc.erase("variant");
  io::write_json(fs::path(o.out) / "report.json", doc);
  std::string text = format_report(report);
  text = text.substr(text.find('\n') + 1);
  io::write_bytes(fs::path(o.out) / "report.txt", text);
  out << text;
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const Stopwatch clock;
  const auto rows = run_dropout_sweep(data, spec);
  io::write_json(fs::path(o.out) / "sweep.json", sweep_to_json(rows));
  io::write_bytes(fs::path(o.out) / "sweep.txt", format_sweep(rows));
  out << format_sweep(rows) << "sweep finished in " << clock.seconds() << " s\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const auto rows = run_ablation(data, spec);
  io::write_json(fs::path(o.out) / "ablation.json", ablation_to_json(rows));
  io::write_bytes(fs::path(o.out) / "ablation.txt", format_ablation(rows));
  out << format_ablation(rows);
  return kExitOk;
}

int cmd_run(const Options& o, std::ostream& out) {
  const ExperimentSpec spec = resolve_spec(o);
  const Dataset data = load_dataset(o.data);
  const Stopwatch clock;
  const PipelineReport report = run_pipeline(data, spec, fs::path(o.out));
  out << format_report(report) << "pipeline finished in " << clock.seconds() << " s\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decoupled spatial attention: pseudo-annotation pipeline"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, o);
  gen->add_option("--count", o.count, "Number of scenes");

  auto* train = app.add_subcommand("train", "Train an attention model");
  add_common(train, o);
  add_data(train, o);
  add_model_flags(train, o);

  auto* annotate = app.add_subcommand("annotate", "Write attention maps, unaries and raw masks");
  add_common(annotate, o);
  add_data(annotate, o);
  annotate->add_option("--model", o.model, "Checkpoint directory")->required();
  add_mask_flags(annotate, o);
  add_crf_flags(annotate, o);

  auto* refine = app.add_subcommand("refine", "CRF-refine merged masks");
  add_common(refine, o);
  add_data(refine, o);
  refine->add_option("--masks", o.masks, "Directory holding <scene>.merged.mask files")->required();
  add_crf_flags(refine, o);

  auto* eval = app.add_subcommand("eval", "Score masks against ground truth");
  add_common(eval, o);
  add_data(eval, o);
  eval->add_option("--masks", o.masks, "Directory holding <scene>.<kind>.mask files")->required();

  auto* sweep = app.add_subcommand("sweep", "Dropout-rate sweep on merged masks");
  add_common(sweep, o);
  add_data(sweep, o);
  add_mask_flags(sweep, o);

  auto* ablate = app.add_subcommand("ablate", "Decoupled vs conventional vs single-stream");
  add_common(ablate, o);
  add_data(ablate, o);
  add_model_flags(ablate, o);
  add_mask_flags(ablate, o);

  auto* run = app.add_subcommand("run", "Train, annotate, refine and evaluate");
  add_common(run, o);
  add_data(run, o);
  add_model_flags(run, o);
  add_mask_flags(run, o);
  add_crf_flags(run, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (annotate->parsed()) return cmd_annotate(o, out);
    if (refine->parsed()) return cmd_refine(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
    if (run->parsed()) return cmd_run(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace dattn
