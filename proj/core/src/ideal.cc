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

#include "refinebox/ideal.hpp"

#include <algorithm>
#include <sstream>

#include "refinebox/errors.hpp"

namespace refinebox {

std::vector<std::pair<std::size_t, std::size_t>> MatchDataset(
    std::span<const Detection> preds, std::span<const GtInstance> gts,
    const ImageSizes& images, const MatchWeights& w) {
  std::map<ImageId, std::vector<std::size_t>> pred_by_image, gt_by_image;
  for (std::size_t i = 0; i < preds.size(); ++i) pred_by_image[preds[i].image_id].push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (!gts[i].iscrowd) gt_by_image[gts[i].image_id].push_back(i);
  }

  std::vector<std::pair<std::size_t, std::size_t>> matches;
  for (const auto& [image_id, pred_idx] : pred_by_image) {
    const auto git = gt_by_image.find(image_id);
    if (git == gt_by_image.end()) continue;
    const auto size_it = images.find(image_id);
    if (size_it == images.end()) {
      std::ostringstream msg;
      msg << "no image size for image_id " << image_id;
      throw DataError(msg.str());
    }
    std::vector<Detection> p;
    std::vector<GtInstance> g;
    for (std::size_t i : pred_idx) p.push_back(preds[i]);
    for (std::size_t i : git->second) g.push_back(gts[i]);
    const Assignment a = MatchImage(p, g, w, size_it->second);
    for (const auto& [r, c] : a.pairs) matches.emplace_back(pred_idx[r], git->second[c]);
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

std::vector<Detection> IdealLocalization(std::span<const Detection> preds,
                                         std::span<const GtInstance> gts,
                                         const ImageSizes& images,
                                         const IdealOptions& options) {
  std::vector<Detection> out(preds.begin(), preds.end());
  for (const auto& [p, g] : MatchDataset(preds, gts, images, options.weights)) {
    out[p].box = gts[g].box;
  }
  return out;
}

std::vector<Detection> IdealClassification(std::span<const Detection> preds,
                                           std::span<const GtInstance> gts,
                                           const ImageSizes& images,
                                           const IdealOptions& options) {
  std::vector<Detection> out(preds.begin(), preds.end());
  for (const auto& [p, g] : MatchDataset(preds, gts, images, options.weights)) {
    Detection& d = out[p];
    d.category_id = gts[g].category_id;
    if (options.score_mode == IdealScoreMode::kOne) {
      d.score = 1.0;
    } else if (d.class_probs && !d.class_probs->empty()) {
      double best = 0.0;
      for (const auto& [cat, prob] : *d.class_probs) best = std::max(best, prob);
      d.score = best;
    }
  }
  return out;
}

IdealReport Analyze(std::span<const Detection> preds,
                    std::span<const GtInstance> gts,
                    std::span<const CategoryId> categories,
                    const ImageSizes& images, const IdealOptions& options,
                    std::span<const double> thresholds) {
  const auto loc = IdealLocalization(preds, gts, images, options);
  const auto cls = IdealClassification(preds, gts, images, options);
  const CocoEvalResult actual = CocoEvaluate(preds, gts, categories);
  const CocoEvalResult ideal_loc = CocoEvaluate(loc, gts, categories);
  const CocoEvalResult ideal_cls = CocoEvaluate(cls, gts, categories);

  IdealReport report;
  report.actual = actual.summary();
  report.ideal_localization = ideal_loc.summary();
  report.ideal_classification = ideal_cls.summary();
  report.localization_delta = report.ideal_localization - report.actual;
  report.classification_delta = report.ideal_classification - report.actual;
  for (double t : thresholds) {
    report.thresholds.push_back(t);
    report.actual_at.push_back(actual.ApAtIou(t));
    report.ideal_localization_at.push_back(ideal_loc.ApAtIou(t));
    report.ideal_classification_at.push_back(ideal_cls.ApAtIou(t));
  }
  return report;
}

}  // namespace refinebox
