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

#ifndef REFINEBOX_TRAINER_HPP_
#define REFINEBOX_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "refinebox/assignment.hpp"
#include "refinebox/coco_eval.hpp"
#include "refinebox/detection.hpp"
#include "refinebox/refine_net.hpp"

namespace refinebox {

struct LossWeights {
  double w_l1 = 5.0;
  double w_giou = 2.0;

  void Validate() const;
};

struct TrainConfig {
  int epochs = 12;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double clip_max_norm = 0.1;
  // Learning rate is multiplied by lr_drop_factor from this (1-based) epoch on.
  int lr_drop_epoch = 11;
  double lr_drop_factor = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  MatchWeights match;
  LossWeights loss;

  void Validate() const;
};

// What the frozen detector hands over for one image.
struct TrainSample {
  ImageId image_id = 0;
  FeaturePyramid features;
  std::vector<Detection> preds;
  std::vector<GtInstance> gts;

  ImageSize image_size() const {
    return {static_cast<double>(features.image_w), static_cast<double>(features.image_h)};
  }
};

struct Targets {
  std::vector<std::size_t> indices;  // Into sample.preds, ascending.
  std::vector<NormBox> boxes;        // Paired ground truth, normalized.
};

// Hungarian-matched predictions and their ground-truth boxes; unmatched
// predictions get no supervision. Crowd ground truth is skipped.
Targets BuildTargets(const TrainSample& sample, const MatchWeights& w);

// Sum over stages and boxes of w_l1 * L1 + w_giou * (1 - GIoU), divided by
// `normalizer` (the box count when omitted). Zero targets give zero loss.
template <typename T>
Var<T> RegressionLoss(std::span<const Var<T>> stage_boxes, const Tensor<T>& targets,
                      const LossWeights& w, std::optional<double> normalizer = std::nullopt);

// Refines the top_k highest-scoring predictions (stable order); everything
// except refined boxes is copied through. A refined box equal to its input
// NormBox leaves the original Box untouched.
std::vector<Detection> RefineTopK(const FeaturePyramid& features,
                                  std::span<const Detection> preds,
                                  const RefinerParams<float>& params, int top_k);

struct ValidationMetrics {
  double mean_iou_raw = 0.0;      // Matched top-K boxes before refinement.
  double mean_iou_refined = 0.0;  // The same boxes after the last stage.
  double mean_iou_first_stage = 0.0;
  std::size_t matched = 0;
  EvalSummary baseline;
  EvalSummary refined;
};

ValidationMetrics EvaluateRefiner(std::span<const TrainSample> samples,
                                  const RefinerParams<float>& params,
                                  std::span<const CategoryId> categories,
                                  const MatchWeights& w);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // Box-weighted mean over the epoch.
  double learning_rate = 0.0;
  std::optional<ValidationMetrics> validation;
};

struct TrainResult {
  RefinerParams<float> params;
  std::vector<EpochMetrics> epochs;
};

struct ValidationSplit {
  std::span<const TrainSample> samples;
  std::span<const CategoryId> categories;
};

// AdamW with global-norm clipping over the refinement network only; the
// samples are read, never written. Deterministic for a fixed seed.
TrainResult Train(std::span<const TrainSample> dataset, const TrainConfig& config,
                  const RefinerConfig& refiner,
                  std::optional<ValidationSplit> validation = std::nullopt,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// CRC-32 over feature values and prediction fields, for frozen-input checks.
std::uint32_t SampleChecksum(std::span<const TrainSample> samples);

}  // namespace refinebox

#endif  // REFINEBOX_TRAINER_HPP_
