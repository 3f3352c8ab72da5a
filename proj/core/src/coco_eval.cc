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

#include "refinebox/coco_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "refinebox/errors.hpp"

namespace refinebox {

namespace {

std::vector<double> Linspace(double start, double stop, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<double>(i) * (stop - start) /
                 static_cast<double>(n - 1) +
             start;
  }
  return out;
}

struct AreaRange {
  double lo;
  double hi;
  bool Contains(double area) const { return area >= lo && area <= hi; }
};

constexpr std::array<AreaRange, 4> kAreaRanges = {{
    {0.0, 1e10},
    {0.0, 32.0 * 32.0},
    {32.0 * 32.0, 96.0 * 96.0},
    {96.0 * 96.0, 1e10},
}};

// Overlap used by the matcher; crowd regions are measured against the
// detection area only.
double MatchOverlap(const Box& dt, const Box& gt, bool crowd) {
  if (!crowd) return Iou(dt, gt);
  const double iw = std::min(dt.x2(), gt.x2()) - std::max(dt.x1(), gt.x1());
  const double ih = std::min(dt.y2(), gt.y2()) - std::max(dt.y1(), gt.y1());
  if (iw <= 0.0 || ih <= 0.0 || dt.area() <= 0.0) return 0.0;
  return iw * ih / dt.area();
}

// Canonical detection order: score descending, then box corners. Makes the
// evaluation independent of the input order.
bool DetectionBefore(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x1() != b.box.x1()) return a.box.x1() < b.box.x1();
  if (a.box.y1() != b.box.y1()) return a.box.y1() < b.box.y1();
  if (a.box.x2() != b.box.x2()) return a.box.x2() < b.box.x2();
  return a.box.y2() < b.box.y2();
}

struct ImageEval {
  std::vector<double> dt_scores;
  // [threshold][detection]
  std::vector<std::vector<char>> dt_matched;
  std::vector<std::vector<char>> dt_ignored;
  std::vector<char> gt_ignored;
};

// Greedy COCO matching for one (image, category, area range) cell.
std::optional<ImageEval> EvaluateCell(const std::vector<const Detection*>& dts,
                                      const std::vector<const GtInstance*>& gts_in,
                                      const AreaRange& range,
                                      const std::vector<double>& iou_thresholds) {
  if (dts.empty() && gts_in.empty()) return std::nullopt;

  std::vector<char> ignore_in(gts_in.size());
  for (std::size_t g = 0; g < gts_in.size(); ++g) {
    ignore_in[g] = gts_in[g]->iscrowd || !range.Contains(gts_in[g]->area);
  }
  // Non-ignored ground truths first, stable.
  std::vector<std::size_t> order(gts_in.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ignore_in[a] < ignore_in[b];
  });
  std::vector<const GtInstance*> gts;
  ImageEval out;
  for (std::size_t idx : order) {
    gts.push_back(gts_in[idx]);
    out.gt_ignored.push_back(ignore_in[idx]);
  }

  const std::size_t num_t = iou_thresholds.size();
  const std::size_t num_d = dts.size();
  const std::size_t num_g = gts.size();
  std::vector<double> ious(num_d * num_g);
  for (std::size_t d = 0; d < num_d; ++d) {
    for (std::size_t g = 0; g < num_g; ++g) {
      ious[d * num_g + g] = MatchOverlap(dts[d]->box, gts[g]->box, gts[g]->iscrowd);
    }
  }

  out.dt_matched.assign(num_t, std::vector<char>(num_d, 0));
  out.dt_ignored.assign(num_t, std::vector<char>(num_d, 0));
  for (std::size_t t = 0; t < num_t; ++t) {
    std::vector<char> gt_taken(num_g, 0);
    for (std::size_t d = 0; d < num_d; ++d) {
      double best = std::min(iou_thresholds[t], 1.0 - 1e-10);
      std::optional<std::size_t> match;
      for (std::size_t g = 0; g < num_g; ++g) {
        if (gt_taken[g] && !gts[g]->iscrowd) continue;
        // Once matched to a real gt, stop at the first ignored one.
        if (match && !out.gt_ignored[*match] && out.gt_ignored[g]) break;
        if (ious[d * num_g + g] < best) continue;
        best = ious[d * num_g + g];
        match = g;
      }
      if (!match) continue;
      out.dt_ignored[t][d] = out.gt_ignored[*match];
      out.dt_matched[t][d] = 1;
      gt_taken[*match] = 1;
    }
  }
  for (std::size_t d = 0; d < num_d; ++d) {
    const bool outside = !range.Contains(dts[d]->box.area());
    for (std::size_t t = 0; t < num_t; ++t) {
      if (!out.dt_matched[t][d] && outside) out.dt_ignored[t][d] = 1;
    }
    out.dt_scores.push_back(dts[d]->score);
  }
  return out;
}

}  // namespace

std::array<double, 12> EvalSummary::Values() const {
  return {ap, ap50, ap75, ap_s, ap_m, ap_l, ar1, ar10, ar100, ar_s, ar_m, ar_l};
}

EvalSummary EvalSummary::FromValues(const std::array<double, 12>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
}

EvalSummary operator-(const EvalSummary& a, const EvalSummary& b) {
  const auto va = a.Values();
  const auto vb = b.Values();
  std::array<double, 12> d{};
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = va[i] - vb[i];
  return EvalSummary::FromValues(d);
}

CocoEvalParams CocoEvalParams::Default() {
  CocoEvalParams p;
  p.iou_thresholds = Linspace(0.5, 0.95, 10);
  p.recall_thresholds = Linspace(0.0, 1.0, 101);
  return p;
}

CocoEvalResult::CocoEvalResult(CocoEvalParams params, std::size_t num_categories)
    : params_(std::move(params)), num_categories_(num_categories) {
  const std::size_t t = params_.iou_thresholds.size();
  const std::size_t r = params_.recall_thresholds.size();
  const std::size_t a = kAreaRanges.size();
  const std::size_t m = params_.max_dets.size();
  precision_.assign(t * r * num_categories_ * a * m, -1.0);
  recall_.assign(t * num_categories_ * a * m, -1.0);
}

double& CocoEvalResult::precision(std::size_t t, std::size_t r, std::size_t k,
                                  std::size_t a, std::size_t m) {
  const std::size_t nr = params_.recall_thresholds.size();
  const std::size_t nm = params_.max_dets.size();
  return precision_[(((t * nr + r) * num_categories_ + k) * kAreaRanges.size() + a) * nm + m];
}

double CocoEvalResult::precision(std::size_t t, std::size_t r, std::size_t k,
                                 std::size_t a, std::size_t m) const {
  return const_cast<CocoEvalResult*>(this)->precision(t, r, k, a, m);
}

double& CocoEvalResult::recall(std::size_t t, std::size_t k, std::size_t a,
                               std::size_t m) {
  const std::size_t nm = params_.max_dets.size();
  return recall_[((t * num_categories_ + k) * kAreaRanges.size() + a) * nm + m];
}

double CocoEvalResult::recall(std::size_t t, std::size_t k, std::size_t a,
                              std::size_t m) const {
  return const_cast<CocoEvalResult*>(this)->recall(t, k, a, m);
}

double CocoEvalResult::Mean(bool ap, int iou_index, std::size_t area,
                            int max_det) const {
  const auto& md = params_.max_dets;
  const auto m_it = std::find(md.begin(), md.end(), max_det);
  if (m_it == md.end()) {
    throw std::invalid_argument("CocoEvalResult: maxDets value not evaluated");
  }
  const std::size_t m = static_cast<std::size_t>(m_it - md.begin());
  const std::size_t nt = params_.iou_thresholds.size();
  const std::size_t t_lo = iou_index < 0 ? 0 : static_cast<std::size_t>(iou_index);
  const std::size_t t_hi = iou_index < 0 ? nt : t_lo + 1;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = t_lo; t < t_hi; ++t) {
    for (std::size_t k = 0; k < num_categories_; ++k) {
      if (ap) {
        for (std::size_t r = 0; r < params_.recall_thresholds.size(); ++r) {
          const double v = precision(t, r, k, area, m);
          if (v > -1.0) {
            sum += v;
            ++count;
          }
        }
      } else {
        const double v = recall(t, k, area, m);
        if (v > -1.0) {
          sum += v;
          ++count;
        }
      }
    }
  }
  return count == 0 ? -1.0 : sum / static_cast<double>(count);
}

double CocoEvalResult::ApAtIou(double iou_threshold) const {
  const auto& th = params_.iou_thresholds;
  for (std::size_t t = 0; t < th.size(); ++t) {
    if (std::abs(th[t] - iou_threshold) < 1e-9) {
      return Mean(true, static_cast<int>(t), 0, params_.max_dets.back());
    }
  }
  std::ostringstream msg;
  msg << "IoU threshold " << iou_threshold << " was not evaluated";
  throw std::invalid_argument(msg.str());
}

void CocoEvalResult::Summarize() {
  const int top = params_.max_dets.back();
  auto index_of = [&](double thr) {
    for (std::size_t t = 0; t < params_.iou_thresholds.size(); ++t) {
      if (std::abs(params_.iou_thresholds[t] - thr) < 1e-9) return static_cast<int>(t);
    }
    return -2;
  };
  const int i50 = index_of(0.5);
  const int i75 = index_of(0.75);
  summary_.ap = Mean(true, -1, 0, top);
  summary_.ap50 = i50 >= 0 ? Mean(true, i50, 0, top) : -1.0;
  summary_.ap75 = i75 >= 0 ? Mean(true, i75, 0, top) : -1.0;
  summary_.ap_s = Mean(true, -1, 1, top);
  summary_.ap_m = Mean(true, -1, 2, top);
  summary_.ap_l = Mean(true, -1, 3, top);
  const auto& md = params_.max_dets;
  summary_.ar1 = Mean(false, -1, 0, md[0]);
  summary_.ar10 = md.size() > 1 ? Mean(false, -1, 0, md[1]) : -1.0;
  summary_.ar100 = Mean(false, -1, 0, top);
  summary_.ar_s = Mean(false, -1, 1, top);
  summary_.ar_m = Mean(false, -1, 2, top);
  summary_.ar_l = Mean(false, -1, 3, top);
}

CocoEvalResult CocoEvaluate(std::span<const Detection> preds,
                            std::span<const GtInstance> gts,
                            std::span<const CategoryId> categories,
                            const CocoEvalParams& params) {
  std::vector<CategoryId> cats(categories.begin(), categories.end());
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  auto cat_index = [&](CategoryId id, const char* what, ImageId image) {
    const auto it = std::lower_bound(cats.begin(), cats.end(), id);
    if (it == cats.end() || *it != id) {
      std::ostringstream msg;
      msg << what << " on image " << image << " has unknown category_id " << id;
      throw DataError(msg.str());
    }
    return static_cast<std::size_t>(it - cats.begin());
  };

  std::set<ImageId> image_set;
  using Key = std::pair<std::size_t, ImageId>;
  std::map<Key, std::vector<const Detection*>> dt_cells;
  std::map<Key, std::vector<const GtInstance*>> gt_cells;
  for (const auto& g : gts) {
    gt_cells[{cat_index(g.category_id, "annotation", g.image_id), g.image_id}]
        .push_back(&g);
    image_set.insert(g.image_id);
  }
  for (const auto& d : preds) {
    dt_cells[{cat_index(d.category_id, "detection", d.image_id), d.image_id}]
        .push_back(&d);
    image_set.insert(d.image_id);
  }
  const std::vector<ImageId> images(image_set.begin(), image_set.end());
  const std::size_t max_det = static_cast<std::size_t>(params.max_dets.back());

  CocoEvalResult result(params, cats.size());
  if (gts.empty()) {
    result.Summarize();
    return result;
  }

  const std::size_t nt = params.iou_thresholds.size();
  const std::size_t nr = params.recall_thresholds.size();
  static const std::vector<const Detection*> kNoDts;
  static const std::vector<const GtInstance*> kNoGts;

  for (std::size_t k = 0; k < cats.size(); ++k) {
    // Per image detections in canonical order, truncated to the top budget.
    std::vector<std::vector<const Detection*>> image_dts(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto it = dt_cells.find({k, images[i]});
      if (it == dt_cells.end()) continue;
      auto& v = image_dts[i];
      v = it->second;
      std::sort(v.begin(), v.end(), [](const Detection* a, const Detection* b) {
        return DetectionBefore(*a, *b);
      });
      if (v.size() > max_det) v.resize(max_det);
    }
    for (std::size_t a = 0; a < kAreaRanges.size(); ++a) {
      std::vector<ImageEval> evals;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto git = gt_cells.find({k, images[i]});
        auto e = EvaluateCell(image_dts[i], git == gt_cells.end() ? kNoGts : git->second,
                              kAreaRanges[a], params.iou_thresholds);
        if (e) evals.push_back(std::move(*e));
      }
      if (evals.empty()) continue;
      std::size_t npig = 0;
      for (const auto& e : evals) {
        npig += static_cast<std::size_t>(std::count(e.gt_ignored.begin(), e.gt_ignored.end(), 0));
      }
      if (npig == 0) continue;

      for (std::size_t m = 0; m < params.max_dets.size(); ++m) {
        const std::size_t budget = static_cast<std::size_t>(params.max_dets[m]);
        struct Entry {
          double score;
          std::size_t e;
          std::size_t d;
        };
        std::vector<Entry> entries;
        for (std::size_t e = 0; e < evals.size(); ++e) {
          const std::size_t n = std::min(budget, evals[e].dt_scores.size());
          for (std::size_t d = 0; d < n; ++d) entries.push_back({evals[e].dt_scores[d], e, d});
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Entry& x, const Entry& y) { return x.score > y.score; });

        for (std::size_t t = 0; t < nt; ++t) {
          std::vector<double> rc, pr;
          rc.reserve(entries.size());
          pr.reserve(entries.size());
          double tp = 0.0, fp = 0.0;
          for (const auto& en : entries) {
            const auto& ev = evals[en.e];
            if (ev.dt_ignored[t][en.d]) {
              // Ignored detections extend the curve without moving it.
            } else if (ev.dt_matched[t][en.d]) {
              tp += 1.0;
            } else {
              fp += 1.0;
            }
            rc.push_back(tp / static_cast<double>(npig));
            pr.push_back(tp + fp > 0.0 ? tp / (tp + fp) : 0.0);
          }
          result.recall(t, k, a, m) = rc.empty() ? 0.0 : rc.back();
          for (std::size_t i = pr.size(); i-- > 1;) {
            pr[i - 1] = std::max(pr[i - 1], pr[i]);
          }
          for (std::size_t r = 0; r < nr; ++r) {
            const auto pos = std::lower_bound(rc.begin(), rc.end(),
                                              params.recall_thresholds[r]);
            result.precision(t, r, k, a, m) =
                pos == rc.end() ? 0.0 : pr[static_cast<std::size_t>(pos - rc.begin())];
          }
        }
      }
    }
  }
  result.Summarize();
  return result;
}

EvalSummary CocoEval(std::span<const Detection> preds,
                     std::span<const GtInstance> gts,
                     std::span<const CategoryId> categories) {
  return CocoEvaluate(preds, gts, categories).summary();
}

}  // namespace refinebox
