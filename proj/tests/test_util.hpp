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

#ifndef REFINEBOX_TESTS_TEST_UTIL_HPP_
#define REFINEBOX_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "refinebox/assignment.hpp"
#include "refinebox/autograd.hpp"
#include "refinebox/box.hpp"
#include "refinebox/tensor.hpp"

namespace rbtest {

using refinebox::Box;
using refinebox::Shape;
using refinebox::Tensor;
using refinebox::Var;

inline Tensor<double> RandomTensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// sum(x * w) as a scalar graph node; w is a constant.
template <typename T>
Var<T> WeightedSum(const Var<T>& x, const Tensor<T>& w) {
  T s = 0;
  for (std::size_t i = 0; i < w.numel(); ++i) s += x.value()[i] * w[i];
  Tensor<T> out({1}, s);
  return refinebox::MakeResult<T>(std::move(out), "weighted_sum", {x},
                                  [w](refinebox::Node<T>& n) {
                                    auto& in = *n.inputs[0];
                                    if (!in.requires_grad) return;
                                    const T g = n.grad[0];
                                    auto& ig = in.Grad();
                                    for (std::size_t i = 0; i < w.numel(); ++i) ig[i] += g * w[i];
                                  });
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences of f against reverse mode for every entry of every
// leaf (or a random sample of at most max_entries per leaf). The relative
// error uses max(|analytic|, |numeric|, floor) as its denominator.
inline GradCheck CheckGradients(const std::function<Var<double>()>& f,
                                std::vector<Var<double>> leaves, std::mt19937_64& rng,
                                std::size_t max_entries = 0, double h = 1e-6,
                                double floor = 1e-3) {
  for (auto& l : leaves) l.ZeroGrad();
  const Var<double> y = f();
  refinebox::Backward(y);
  GradCheck out;
  for (auto& leaf : leaves) {
    const Tensor<double> analytic =
        leaf.grad() != nullptr ? *leaf.grad() : Tensor<double>(leaf.shape());
    std::vector<std::size_t> idx(leaf.value().numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries > 0 && idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = leaf.value()[i];
      double fp, fm;
      {
        refinebox::NoGradGuard guard;
        leaf.mutable_value()[i] = saved + h;
        fp = f().value()[0];
        leaf.mutable_value()[i] = saved - h;
        fm = f().value()[0];
      }
      leaf.mutable_value()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

// Exhaustive minimum over all injective maps of the smaller side into the
// larger one.
inline double BruteForceMinCost(const refinebox::CostMatrix& c) {
  const std::size_t r = c.rows(), k = c.cols();
  if (r == 0 || k == 0) return 0.0;
  const bool rows_small = r <= k;
  const std::size_t small = rows_small ? r : k, big = rows_small ? k : r;
  std::vector<std::size_t> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small; ++i) s += rows_small ? c(i, perm[i]) : c(perm[i], i);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Lexicographically smallest optimal gt-per-pred vector (unmatched = big),
// by exhaustion; the reference for tie-breaking.
inline std::vector<std::size_t> BruteForceLexAssignment(const refinebox::CostMatrix& c,
                                                        double tol) {
  const std::size_t r = c.rows(), k = c.cols();
  const double best = BruteForceMinCost(c);
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best_vec;
  // Enumerate assignments of rows to distinct columns or "none".
  std::vector<std::size_t> cur(r, none);
  std::vector<bool> used(k, false);
  const std::size_t need = std::min(r, k);
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t i, std::size_t n,
                                                                   double s) {
    if (i == r) {
      if (n == need && std::abs(s - best) <= tol && (best_vec.empty() || cur < best_vec)) {
        best_vec = cur;
      }
      return;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (used[j]) continue;
      used[j] = true;
      cur[i] = j;
      rec(i + 1, n + 1, s + c(i, j));
      used[j] = false;
    }
    if (r - i - 1 >= need - n || n == need) {
      cur[i] = none;
      rec(i + 1, n, s);
    }
  };
  rec(0, 0, 0.0);
  return best_vec;
}

// Dense bilinear ROI sampler: every sample is a full tent-kernel sum over
// the map, with coordinates clamped to the map as in the usual aligned
// convention (samples beyond one cell outside read zero).
inline std::vector<double> DenseRoiAlign(const Tensor<double>& f, double x1, double y1, double x2,
                                         double y2, int out, int sr) {
  const auto c_dim = f.shape()[0], h = f.shape()[1], w = f.shape()[2];
  const double sx = x1 - 0.5, sy = y1 - 0.5;
  const double bw = (x2 - x1) / out, bh = (y2 - y1) / out;
  std::vector<double> result(static_cast<std::size_t>(c_dim * out * out), 0.0);
  auto tent = [](double d) { return std::max(0.0, 1.0 - std::abs(d)); };
  for (int ph = 0; ph < out; ++ph) {
    for (int pw = 0; pw < out; ++pw) {
      for (int iy = 0; iy < sr; ++iy) {
        for (int ix = 0; ix < sr; ++ix) {
          double y = sy + ph * bh + (iy + 0.5) * bh / sr;
          double x = sx + pw * bw + (ix + 0.5) * bw / sr;
          if (y < -1.0 || y > static_cast<double>(h) || x < -1.0 || x > static_cast<double>(w)) {
            continue;
          }
          y = std::clamp(y, 0.0, static_cast<double>(h - 1));
          x = std::clamp(x, 0.0, static_cast<double>(w - 1));
          for (std::int64_t c = 0; c < c_dim; ++c) {
            double v = 0.0;
            for (std::int64_t i = 0; i < h; ++i) {
              const double ty = tent(y - static_cast<double>(i));
              if (ty == 0.0) continue;
              for (std::int64_t j = 0; j < w; ++j) {
                v += f[static_cast<std::size_t>((c * h + i) * w + j)] * ty *
                     tent(x - static_cast<double>(j));
              }
            }
            result[static_cast<std::size_t>((c * out + ph) * out + pw)] +=
                v / static_cast<double>(sr * sr);
          }
        }
      }
    }
  }
  return result;
}

}  // namespace rbtest

#endif  // REFINEBOX_TESTS_TEST_UTIL_HPP_
