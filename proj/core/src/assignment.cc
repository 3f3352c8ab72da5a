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

#include "refinebox/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "refinebox/errors.hpp"

namespace refinebox {

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  if (!std::isfinite(fill)) {
    throw std::invalid_argument("CostMatrix: non-finite fill value");
  }
}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw std::invalid_argument("CostMatrix: value count does not match shape");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("CostMatrix: non-finite entry");
    }
  }
}

void CostMatrix::Set(std::size_t r, std::size_t c, double value) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("CostMatrix: non-finite entry");
  }
  values_[r * cols_ + c] = value;
}

double Assignment::TotalCost(const CostMatrix& cost) const {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += cost(r, c);
  return total;
}

void MatchWeights::Validate() const {
  if (w_cls < 0.0 || w_l1 < 0.0 || w_giou < 0.0) {
    throw std::invalid_argument("MatchWeights: weights must be nonnegative");
  }
  if (w_cls == 0.0 && w_l1 == 0.0 && w_giou == 0.0) {
    throw std::invalid_argument("MatchWeights: all weights are zero");
  }
}

namespace {

// Square Hungarian solve with row/column potentials (Jonker-Volgenant style
// shortest augmenting paths). Returns col_of_row; fills the potentials.
std::vector<std::size_t> SolveSquare(const std::vector<double>& a,
                                     std::size_t n, std::vector<double>& u,
                                     std::vector<double>& v) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual row/column 0.
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

// Moves an optimal perfect matching to the lexicographically smallest one
// among all matchings made of tight (zero reduced cost) edges.
class LexicographicCanonicalizer {
 public:
  LexicographicCanonicalizer(std::vector<std::vector<char>> tight,
                             std::vector<std::size_t> col_of_row)
      : n_(col_of_row.size()),
        tight_(std::move(tight)),
        col_of_row_(std::move(col_of_row)),
        row_of_col_(n_) {
    for (std::size_t r = 0; r < n_; ++r) row_of_col_[col_of_row_[r]] = r;
  }

  // Padding rows (>= real_rows) and columns (>= col_limit) are never
  // canonicalized; any dummy column stands for "unmatched".
  std::vector<std::size_t> Run(std::size_t real_rows, std::size_t col_limit) {
    for (std::size_t i = 0; i < real_rows; ++i) {
      const std::size_t upper = std::min(col_of_row_[i], col_limit);
      for (std::size_t j = 0; j < upper; ++j) {
        if (!tight_[i][j]) continue;
        if (TryReassign(i, j)) break;
      }
    }
    return col_of_row_;
  }

 private:
  bool TryReassign(std::size_t row, std::size_t col) {
    const std::size_t owner = row_of_col_[col];
    if (owner < row) return false;  // Locked.
    const std::size_t freed = col_of_row_[row];
    visited_.assign(n_, 0);
    visited_[col] = 1;
    locked_below_ = row;
    target_ = freed;
    if (!Augment(owner)) return false;
    col_of_row_[row] = col;
    row_of_col_[col] = row;
    return true;
  }

  // Finds new columns for `r` along an alternating path ending in target_.
  bool Augment(std::size_t r) {
    for (std::size_t c = 0; c < n_; ++c) {
      if (!tight_[r][c] || visited_[c]) continue;
      visited_[c] = 1;
      if (c == target_) {
        col_of_row_[r] = c;
        row_of_col_[c] = r;
        return true;
      }
      const std::size_t next = row_of_col_[c];
      if (next <= locked_below_) continue;
      if (Augment(next)) {
        col_of_row_[r] = c;
        row_of_col_[c] = r;
        return true;
      }
    }
    return false;
  }

  std::size_t n_;
  std::vector<std::vector<char>> tight_;
  std::vector<std::size_t> col_of_row_;
  std::vector<std::size_t> row_of_col_;
  std::vector<char> visited_;
  std::size_t locked_below_ = 0;
  std::size_t target_ = 0;
};

}  // namespace

Assignment Hungarian(const CostMatrix& cost) {
  Assignment result;
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  if (cost.empty()) {
    for (std::size_t r = 0; r < rows; ++r) result.unmatched_preds.push_back(r);
    for (std::size_t c = 0; c < cols; ++c) result.unmatched_gts.push_back(c);
    return result;
  }

  const std::size_t n = std::max(rows, cols);
  double max_entry = -std::numeric_limits<double>::infinity();
  double scale = 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      max_entry = std::max(max_entry, cost(r, c));
      scale = std::max(scale, std::abs(cost(r, c)));
    }
  }
  const double sentinel = max_entry + 1.0;
  std::vector<double> square(n * n, sentinel);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) square[r * n + c] = cost(r, c);
  }

  std::vector<double> u, v;
  std::vector<std::size_t> col_of_row = SolveSquare(square, n, u, v);

  const double tol = kTieTolerance * scale;
  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      tight[r][c] = square[r * n + c] - u[r + 1] - v[c + 1] <= tol;
    }
    // Matched edges are tight by construction; guard against round-off.
    tight[r][col_of_row[r]] = 1;
  }
  col_of_row =
      LexicographicCanonicalizer(std::move(tight), std::move(col_of_row))
          .Run(rows, cols);

  std::vector<char> gt_used(cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = col_of_row[r];
    if (c < cols) {
      result.pairs.emplace_back(r, c);
      gt_used[c] = 1;
    } else {
      result.unmatched_preds.push_back(r);
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    if (!gt_used[c]) result.unmatched_gts.push_back(c);
  }
  return result;
}

double ClassProbability(const Detection& pred, CategoryId category) {
  if (pred.class_probs) {
    const auto it = pred.class_probs->find(category);
    if (it == pred.class_probs->end()) {
      std::ostringstream msg;
      msg << "prediction on image " << pred.image_id
          << " has class_probs without category " << category;
      throw DataError(msg.str());
    }
    return it->second;
  }
  return pred.category_id == category ? pred.score : 0.0;
}

double MatchCost(const Detection& pred, const GtInstance& gt,
                 const MatchWeights& w, const ImageSize& image) {
  const double p = ClassProbability(pred, gt.category_id);
  const NormBox a = ToNormBox(pred.box, image.width, image.height);
  const NormBox b = ToNormBox(gt.box, image.width, image.height);
  const double l1 = std::abs(a.cx() - b.cx()) + std::abs(a.cy() - b.cy()) +
                    std::abs(a.w() - b.w()) + std::abs(a.h() - b.h());
  return w.w_cls * -p + w.w_l1 * l1 + w.w_giou * -Giou(pred.box, gt.box);
}

Assignment MatchImage(std::span<const Detection> preds,
                      std::span<const GtInstance> gts, const MatchWeights& w,
                      const ImageSize& image) {
  w.Validate();
  const ImageId image_id =
      !preds.empty() ? preds.front().image_id
                     : (!gts.empty() ? gts.front().image_id : 0);
  for (const auto& p : preds) {
    if (p.image_id != image_id) {
      throw std::invalid_argument("MatchImage: records span several images");
    }
  }
  for (const auto& g : gts) {
    if (g.image_id != image_id) {
      throw std::invalid_argument("MatchImage: records span several images");
    }
  }
  CostMatrix cost(preds.size(), gts.size());
  for (std::size_t r = 0; r < preds.size(); ++r) {
    for (std::size_t c = 0; c < gts.size(); ++c) {
      cost.Set(r, c, MatchCost(preds[r], gts[c], w, image));
    }
  }
  return Hungarian(cost);
}

}  // namespace refinebox
