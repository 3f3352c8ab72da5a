// Copyright 2026 The RefineBox Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// refinebox: batch front end over the core library.
//
//   refinebox gen-synth --config F --out DIR
//   refinebox train --gt F --preds F --features F --config F --out CKPT
//   refinebox refine --ckpt F --preds F --features F --out F [--topk K]
//   refinebox eval --gt F --preds F --out F
//   refinebox analyze --gt F --preds F --out F [--thresholds 50,75]
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "refinebox/binary_io.hpp"
#include "refinebox/coco_eval.hpp"
#include "refinebox/coco_io.hpp"
#include "refinebox/config.hpp"
#include "refinebox/errors.hpp"
#include "refinebox/ideal.hpp"
#include "refinebox/log.hpp"
#include "refinebox/report.hpp"
#include "refinebox/samples.hpp"
#include "refinebox/synth.hpp"
#include "refinebox/trainer.hpp"

namespace fs = std::filesystem;
using namespace refinebox;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

ToolConfig LoadConfig(const std::string& path, const Globals& g) {
  ToolConfig cfg = path.empty() ? ToolConfig{} : LoadToolConfig(path);
  if (g.seed) cfg.train.seed = cfg.synth.seed = *g.seed;
  return cfg;
}

std::string Fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

void WriteSplit(const fs::path& dir, std::span<const TrainSample> samples,
                std::span<const CategoryId> categories) {
  fs::create_directories(dir);
  const SampleFiles files = ToSampleFiles(samples, categories);
  SaveCoco(files.dataset, dir / "gt.json");
  SaveResults(files.predictions, dir / "preds.json");
  WriteFeatureDump(files.features, dir / "features.rfbx");
}

struct GenSynthArgs {
  std::string config;
  std::string out;
};

int RunGenSynth(const GenSynthArgs& a, const Globals& g) {
  const ToolConfig cfg = LoadConfig(a.config, g);
  const SyntheticData data = GenSynthetic(cfg.synth);
  WriteSplit(fs::path(a.out) / "train", data.train, data.categories);
  WriteSplit(fs::path(a.out) / "val", data.val, data.categories);
  LogInfo("gen-synth: " + std::to_string(data.train.size()) + " train / " +
          std::to_string(data.val.size()) + " val images in " + a.out);
  return kOk;
}

std::vector<TrainSample> LoadSamples(const std::string& gt, const std::string& preds,
                                     const std::string& features, CocoDataset* dataset_out) {
  CocoDataset ds = LoadCoco(gt);
  const auto dets = LoadResults(preds, &ds);
  auto samples = AssembleSamples(ds, dets, ReadFeatureDump(features));
  if (dataset_out != nullptr) *dataset_out = std::move(ds);
  return samples;
}

struct TrainArgs {
  std::string gt, preds, features, config, out;
  std::string val_gt, val_preds, val_features;
  std::string metrics;
};

int RunTrain(const TrainArgs& a, const Globals& g) {
  const ToolConfig cfg = LoadConfig(a.config, g);
  const auto train = LoadSamples(a.gt, a.preds, a.features, nullptr);
  std::vector<TrainSample> val;
  CocoDataset val_ds;
  std::vector<CategoryId> val_categories;
  std::optional<ValidationSplit> split;
  const int val_given = !a.val_gt.empty() + !a.val_preds.empty() + !a.val_features.empty();
  if (val_given != 0 && val_given != 3) {
    throw CLI::ValidationError("--val-gt, --val-preds and --val-features go together");
  }
  if (val_given == 3) {
    val = LoadSamples(a.val_gt, a.val_preds, a.val_features, &val_ds);
    val_categories = val_ds.CategoryIds();
    split = ValidationSplit{val, val_categories};
  }
  const TrainResult result = Train(train, cfg.train, cfg.refiner, split);
  SaveCheckpoint(result.params, a.out);
  if (!a.metrics.empty()) WriteFileAtomic(a.metrics, TrainLogJson(result.epochs));
  LogInfo("train: wrote " + a.out);
  return kOk;
}

struct RefineArgs {
  std::string ckpt, preds, features, out;
  std::optional<int> topk;
};

int RunRefine(const RefineArgs& a, const Globals&) {
  const RefinerParams<float> params = LoadCheckpoint(a.ckpt);
  const int top_k = a.topk.value_or(params.config().top_k);
  if (top_k < 0) throw CLI::ValidationError("--topk must be nonnegative");
  std::vector<Detection> dets = LoadResults(a.preds);
  std::map<ImageId, FeaturePyramid> pyramids;
  for (auto& rec : ReadFeatureDump(a.features)) {
    if (!pyramids.emplace(rec.image_id, std::move(rec.pyramid)).second) {
      throw DataError("features: duplicate record for image id " + std::to_string(rec.image_id));
    }
  }
  std::map<ImageId, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < dets.size(); ++i) by_image[dets[i].image_id].push_back(i);
  for (const auto& [id, indices] : by_image) {
    auto it = pyramids.find(id);
    if (it == pyramids.end()) {
      throw DataError("features: no record for image id " + std::to_string(id));
    }
    std::vector<Detection> group;
    for (std::size_t i : indices) group.push_back(dets[i]);
    const auto refined = RefineTopK(it->second, group, params, top_k);
    for (std::size_t j = 0; j < indices.size(); ++j) dets[indices[j]] = refined[j];
  }
  SaveResults(dets, a.out);
  LogInfo("refine: " + std::to_string(dets.size()) + " detections written to " + a.out);
  return kOk;
}

struct EvalArgs {
  std::string gt, preds, out, csv;
};

int RunEval(const EvalArgs& a, const Globals&) {
  const CocoDataset ds = LoadCoco(a.gt);
  const auto dets = LoadResults(a.preds, &ds);
  const EvalSummary s = CocoEval(dets, ds.annotations, ds.CategoryIds());
  WriteFileAtomic(a.out, EvalReportJson(s));
  if (!a.csv.empty()) WriteFileAtomic(a.csv, EvalReportCsv(s));
  LogInfo("eval: AP " + Fmt(s.ap) + " AP50 " + Fmt(s.ap50) + " AP75 " + Fmt(s.ap75));
  return kOk;
}

struct AnalyzeArgs {
  std::string gt, preds, out;
  std::vector<double> thresholds;
};

int RunAnalyze(const AnalyzeArgs& a, const Globals&) {
  const CocoDataset ds = LoadCoco(a.gt);
  const auto dets = LoadResults(a.preds, &ds);
  std::vector<double> thresholds;
  for (double t : a.thresholds) thresholds.push_back(t / 100.0);
  const auto categories = ds.CategoryIds();
  const IdealReport r = Analyze(dets, ds.annotations, categories, ds.Sizes(), {}, thresholds);
  WriteFileAtomic(a.out, IdealReportJson(r));
  LogInfo("analyze: AP " + Fmt(r.actual.ap) + ", ideal localization " +
          Fmt(r.ideal_localization.ap) + ", ideal classification " +
          Fmt(r.ideal_classification.ap));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box refinement toolkit over frozen detector outputs"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--seed", globals.seed, "Overrides the configured seed")->capture_default_str();
  app.add_flag("--quiet", globals.quiet, "Suppress progress output");

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write a synthetic detector dataset");
  gen_cmd->add_option("--config", gen.config, "key = value config file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the refinement network");
  train_cmd->add_option("--gt", tr.gt, "COCO annotations")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--preds", tr.preds, "Detector results")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--features", tr.features, "Feature dump")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--val-gt", tr.val_gt, "Validation annotations")->check(CLI::ExistingFile);
  train_cmd->add_option("--val-preds", tr.val_preds, "Validation results")->check(CLI::ExistingFile);
  train_cmd->add_option("--val-features", tr.val_features, "Validation feature dump")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--metrics", tr.metrics, "Per-epoch metrics JSON");

  RefineArgs rf;
  auto* refine_cmd = app.add_subcommand("refine", "Refine detector boxes with a checkpoint");
  refine_cmd->add_option("--ckpt", rf.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--preds", rf.preds, "Detector results")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--features", rf.features, "Feature dump")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--out", rf.out, "Refined results")->required();
  refine_cmd->add_option("--topk", rf.topk, "Predictions refined per image");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "COCO box evaluation");
  eval_cmd->add_option("--gt", ev.gt, "COCO annotations")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--preds", ev.preds, "Detector results")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Report JSON")->required();
  eval_cmd->add_option("--csv", ev.csv, "Optional metric,value CSV");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Ideal localization / classification analysis");
  analyze_cmd->add_option("--gt", an.gt, "COCO annotations")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--preds", an.preds, "Detector results")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", an.out, "Report JSON")->required();
  analyze_cmd->add_option("--thresholds", an.thresholds, "IoU thresholds in percent")
      ->delimiter(',')
      ->check(CLI::Range(50.0, 95.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kUsage;
  }
  SetQuiet(globals.quiet);

  try {
    if (*gen_cmd) return RunGenSynth(gen, globals);
    if (*train_cmd) return RunTrain(tr, globals);
    if (*refine_cmd) return RunRefine(rf, globals);
    if (*eval_cmd) return RunEval(ev, globals);
    if (*analyze_cmd) return RunAnalyze(an, globals);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
