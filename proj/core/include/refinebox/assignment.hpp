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

#ifndef REFINEBOX_ASSIGNMENT_HPP_
#define REFINEBOX_ASSIGNMENT_HPP_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "refinebox/detection.hpp"

namespace refinebox {

// Dense rows (predictions) x cols (ground truths) matrix of finite costs.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }
  // Throws std::invalid_argument on a non-finite value.
  void Set(std::size_t r, std::size_t c, double value);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct Assignment {
  // (pred_index, gt_index), ascending by pred_index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unmatched_preds;
  std::vector<std::size_t> unmatched_gts;

  double TotalCost(const CostMatrix& cost) const;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

// Matching-cost coefficients; defaults are the usual DETR set.
struct MatchWeights {
  double w_cls = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;

  void Validate() const;
};

// Exact minimum-cost assignment of size min(rows, cols).
//
// Among all optimal assignments the one returned is the lexicographically
// smallest vector (gt index of pred 0, gt index of pred 1, ...), where an
// unmatched prediction sorts after every gt index. Costs within
// kTieTolerance (relative to the largest magnitude) of the optimum count as
// ties.
Assignment Hungarian(const CostMatrix& cost);

inline constexpr double kTieTolerance = 1e-11;

// Probability the prediction assigns to `category`: the class_probs entry
// when present (missing entry is a DataError), otherwise the score if the
// label matches and 0 if not.
double ClassProbability(const Detection& pred, CategoryId category);

// w_cls * -p(gt class) + w_l1 * |b_pred - b_gt|_1 + w_giou * -giou, with the
// L1 term over normalized (cx, cy, w, h).
double MatchCost(const Detection& pred, const GtInstance& gt,
                 const MatchWeights& w, const ImageSize& image);

// Per-image set matching. All records must share one image id.
Assignment MatchImage(std::span<const Detection> preds,
                      std::span<const GtInstance> gts, const MatchWeights& w,
                      const ImageSize& image);

}  // namespace refinebox

#endif  // REFINEBOX_ASSIGNMENT_HPP_
