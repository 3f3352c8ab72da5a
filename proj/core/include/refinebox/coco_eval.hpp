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

#ifndef REFINEBOX_COCO_EVAL_HPP_
#define REFINEBOX_COCO_EVAL_HPP_

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "refinebox/detection.hpp"

namespace refinebox {

// The twelve standard COCO box metrics. -1 marks an undefined cell (no
// ground truth in the bin).
struct EvalSummary {
  double ap = -1.0;
  double ap50 = -1.0;
  double ap75 = -1.0;
  double ap_s = -1.0;
  double ap_m = -1.0;
  double ap_l = -1.0;
  double ar1 = -1.0;
  double ar10 = -1.0;
  double ar100 = -1.0;
  double ar_s = -1.0;
  double ar_m = -1.0;
  double ar_l = -1.0;

  static constexpr std::array<std::string_view, 12> kNames = {
      "ap",   "ap50", "ap75",  "ap_s", "ap_m", "ap_l",
      "ar1", "ar10", "ar100", "ar_s", "ar_m", "ar_l"};

  std::array<double, 12> Values() const;
  static EvalSummary FromValues(const std::array<double, 12>& values);
  friend bool operator==(const EvalSummary&, const EvalSummary&) = default;
};

EvalSummary operator-(const EvalSummary& a, const EvalSummary& b);

struct CocoEvalParams {
  std::vector<double> iou_thresholds;     // 0.50:0.05:0.95
  std::vector<double> recall_thresholds;  // 0:0.01:1
  std::vector<int> max_dets{1, 10, 100};

  static CocoEvalParams Default();
};

// Full result of one evaluation: the precision/recall tables plus summary.
class CocoEvalResult {
 public:
  CocoEvalResult(CocoEvalParams params, std::size_t num_categories);

  const CocoEvalParams& params() const { return params_; }
  const EvalSummary& summary() const { return summary_; }

  // precision[t][r][k][a][m], -1 where undefined.
  double& precision(std::size_t t, std::size_t r, std::size_t k,
                    std::size_t a, std::size_t m);
  double precision(std::size_t t, std::size_t r, std::size_t k, std::size_t a,
                   std::size_t m) const;
  // recall[t][k][a][m], -1 where undefined.
  double& recall(std::size_t t, std::size_t k, std::size_t a, std::size_t m);
  double recall(std::size_t t, std::size_t k, std::size_t a,
                std::size_t m) const;

  // AP over all areas at maxDets=100 for a single IoU threshold; the
  // threshold must be one of params().iou_thresholds (within 1e-9).
  double ApAtIou(double iou_threshold) const;

  void Summarize();

 private:
  double Mean(bool ap, int iou_index, std::size_t area, int max_det) const;

  CocoEvalParams params_;
  std::size_t num_categories_;
  std::vector<double> precision_;
  std::vector<double> recall_;
  EvalSummary summary_;
};

// COCO bbox evaluation. Crowd ground truths act as ignore regions. A
// detection whose category is not listed is a DataError.
CocoEvalResult CocoEvaluate(std::span<const Detection> preds,
                            std::span<const GtInstance> gts,
                            std::span<const CategoryId> categories,
                            const CocoEvalParams& params =
                                CocoEvalParams::Default());

EvalSummary CocoEval(std::span<const Detection> preds,
                     std::span<const GtInstance> gts,
                     std::span<const CategoryId> categories);

}  // namespace refinebox

#endif  // REFINEBOX_COCO_EVAL_HPP_
