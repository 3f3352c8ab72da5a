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

#ifndef REFINEBOX_IDEAL_HPP_
#define REFINEBOX_IDEAL_HPP_

#include <map>
#include <span>
#include <vector>

#include "refinebox/assignment.hpp"
#include "refinebox/coco_eval.hpp"
#include "refinebox/detection.hpp"

namespace refinebox {

using ImageSizes = std::map<ImageId, ImageSize>;

// How a relabeled prediction is rescored by IdealClassification.
enum class IdealScoreMode {
  kMaxClassProbability,  // Foreground confidence; keeps the ranking intent.
  kOne,
};

struct IdealOptions {
  MatchWeights weights;
  IdealScoreMode score_mode = IdealScoreMode::kMaxClassProbability;
};

// Per image Hungarian matching of predictions to non-crowd ground truth.
// Returned pairs index into `preds` / `gts` (global positions).
std::vector<std::pair<std::size_t, std::size_t>> MatchDataset(
    std::span<const Detection> preds, std::span<const GtInstance> gts,
    const ImageSizes& images, const MatchWeights& w);

// Matched predictions take their ground truth's box. Everything else is
// returned verbatim, in input order.
std::vector<Detection> IdealLocalization(std::span<const Detection> preds,
                                         std::span<const GtInstance> gts,
                                         const ImageSizes& images,
                                         const IdealOptions& options = {});

// Matched predictions take their ground truth's label; boxes are untouched.
std::vector<Detection> IdealClassification(std::span<const Detection> preds,
                                           std::span<const GtInstance> gts,
                                           const ImageSizes& images,
                                           const IdealOptions& options = {});

struct IdealReport {
  EvalSummary actual;
  EvalSummary ideal_localization;
  EvalSummary ideal_classification;
  EvalSummary localization_delta;
  EvalSummary classification_delta;
  // AP at individual IoU thresholds (e.g. 0.50, 0.75) for each of the three
  // prediction sets, in the order requested.
  std::vector<double> thresholds;
  std::vector<double> actual_at;
  std::vector<double> ideal_localization_at;
  std::vector<double> ideal_classification_at;
};

IdealReport Analyze(std::span<const Detection> preds,
                    std::span<const GtInstance> gts,
                    std::span<const CategoryId> categories,
                    const ImageSizes& images, const IdealOptions& options = {},
                    std::span<const double> thresholds = {});

}  // namespace refinebox

#endif  // REFINEBOX_IDEAL_HPP_
