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

#ifndef REFINEBOX_OPS_HPP_
#define REFINEBOX_OPS_HPP_

#include <span>
#include <vector>

#include "refinebox/autograd.hpp"
#include "refinebox/box.hpp"

namespace refinebox {

// Differentiable ops over Var. Image tensors are [N, C, H, W]. Every op is
// instantiated for float (training) and double (gradient checking).

// Stride-1 cross-correlation with zero padding kernel/2; kernel is 1 or 3.
// weight [C_out, C_in, k, k], bias [C_out].
template <typename T>
Var<T> Conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> Relu(const Var<T>& x);

// gamma, beta: [C]. Statistics are per sample and group.
template <typename T>
Var<T> GroupNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 int groups, double eps = 1e-5);

// Nearest-neighbor resize of [N, C, h, w] to [N, C, out_h, out_w].
template <typename T>
Var<T> UpsampleNearest(const Var<T>& x, std::int64_t out_h, std::int64_t out_w);

// [N, C, H, W] -> [N, C].
template <typename T>
Var<T> GlobalAvgPool(const Var<T>& x);

// x [N, in], weight [out, in], bias [out] -> [N, out].
template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> Scale(const Var<T>& x, double factor);

// Sum of one-element tensors.
template <typename T>
Var<T> SumScalars(std::span<const Var<T>> terms);

// boxes, deltas: [N, 4] of normalized (cx, cy, w, h) and logit-space
// updates. Applies RefineCoordinate elementwise.
template <typename T>
Var<T> RefineBoxes(const Var<T>& boxes, const Var<T>& deltas, double eps);

// Sum over boxes of w_l1 * |b - t|_1 + w_giou * (1 - giou(b, t)), with
// giou taken on the corner form of the normalized center boxes.
template <typename T>
Var<T> BoxRegressionLoss(const Var<T>& boxes, const Tensor<T>& targets,
                         double w_l1, double w_giou);

// ROI Align, continuous (half-pixel) coordinates, fixed sampling grid.
struct RoiAlignSpec {
  int output_size = 7;
  int sampling_ratio = 2;
};

// Single-level forward: feature [C, H, W], box in feature-map units.
template <typename T>
Tensor<T> RoiAlign(const Tensor<T>& feature, const Box& box,
                   const RoiAlignSpec& spec);

// Multi-level, differentiable in the features and the boxes. levels[l] is
// [1, C, H_l, W_l] with stride strides[l]; boxes [N, 4] normalized
// (cx, cy, w, h) on an image_w x image_h image; box i pools from
// level_of_box[i]. Output [N, C, S, S].
template <typename T>
Var<T> RoiAlignLevels(std::span<const Var<T>> levels, std::span<const int> strides,
                      const Var<T>& boxes, std::span<const int> level_of_box,
                      double image_w, double image_h, const RoiAlignSpec& spec);

}  // namespace refinebox

#endif  // REFINEBOX_OPS_HPP_
