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

#ifndef REFINEBOX_REFINE_NET_HPP_
#define REFINEBOX_REFINE_NET_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refinebox/autograd.hpp"
#include "refinebox/box.hpp"
#include "refinebox/ops.hpp"

namespace refinebox {

struct RefinerConfig {
  int model_dim = 64;             // FPN output channels C.
  int bottleneck_channels = 64;   // Channels of the 3x3 conv in each block.
  int num_blocks = 3;
  int num_refiners = 3;
  int roi_size = 7;
  bool share_weights = true;
  int top_k = 100;
  double clamp_eps = kDefaultClampEps;
  int norm_groups = 8;
  int sampling_ratio = 2;

  void Validate() const;
  friend bool operator==(const RefinerConfig&, const RefinerConfig&) = default;
};

template <typename T>
struct FeatureLevel {
  Tensor<T> data;  // [C, H, W]
  int stride = 0;
};

// Multi-level dense features of one image, finest level first.
template <typename T>
struct BasicFeaturePyramid {
  std::vector<FeatureLevel<T>> levels;
  int image_w = 0;
  int image_h = 0;

  // Strides strictly increasing; each map covers the image at its stride
  // (H = ceil(image_h / stride) within one cell).
  void Validate() const;
  std::vector<int> Channels() const;
  std::vector<int> Strides() const;

  template <typename U>
  BasicFeaturePyramid<U> Cast() const {
    BasicFeaturePyramid<U> out;
    out.image_w = image_w;
    out.image_h = image_h;
    for (const auto& l : levels) out.levels.push_back({l.data.template Cast<U>(), l.stride});
    return out;
  }
};

using FeaturePyramid = BasicFeaturePyramid<float>;

template <typename T>
struct ConvParams {
  Var<T> weight;
  Var<T> bias;
};

template <typename T>
struct NormParams {
  Var<T> gamma;
  Var<T> beta;
};

template <typename T>
struct BottleneckParams {
  ConvParams<T> reduce;   // 1x1, C -> bottleneck
  NormParams<T> norm_reduce;
  ConvParams<T> spatial;  // 3x3, bottleneck -> bottleneck
  NormParams<T> norm_spatial;
  ConvParams<T> expand;   // 1x1, bottleneck -> C
  NormParams<T> norm_expand;
};

template <typename T>
struct RefinerStageParams {
  std::vector<BottleneckParams<T>> blocks;
  ConvParams<T> hidden;  // Linear C -> C
  ConvParams<T> delta;   // Linear C -> 4, zero-initialized
};

// FPN plus refiner parameters. Copies alias the same leaves; use Clone()
// for an independent set.
template <typename T>
class RefinerParams {
 public:
  // He-uniform weights, zero biases, unit norm scales, zero delta head.
  static RefinerParams Init(const RefinerConfig& config,
                            std::span<const int> backbone_channels,
                            std::uint64_t seed);
  // Correctly shaped, all zero.
  static RefinerParams Zeros(const RefinerConfig& config,
                             std::span<const int> backbone_channels);

  const RefinerConfig& config() const { return config_; }
  const std::vector<int>& backbone_channels() const { return backbone_channels_; }

  std::vector<ConvParams<T>> lateral;
  std::vector<ConvParams<T>> output;
  std::vector<RefinerStageParams<T>> stages;  // One entry when shared.

  const RefinerStageParams<T>& Stage(int index) const;

  // Every trainable tensor in a fixed manifest order.
  std::vector<std::pair<std::string, Var<T>>> Named() const;
  std::size_t Count() const;

  RefinerParams Clone() const;
  template <typename U>
  RefinerParams<U> Cast() const;
  void ZeroGrad();

 private:
  RefinerConfig config_;
  std::vector<int> backbone_channels_;
};

template <typename T>
template <typename U>
RefinerParams<U> RefinerParams<T>::Cast() const {
  RefinerParams<U> out = RefinerParams<U>::Zeros(config_, backbone_channels_);
  const auto src = Named();
  auto dst = out.Named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second.mutable_value() = src[i].second.value().template Cast<U>();
  }
  return out;
}

// FPN output: one [1, C, H, W] Var per level.
template <typename T>
struct PyramidVars {
  std::vector<Var<T>> levels;
  std::vector<int> strides;
  int image_w = 0;
  int image_h = 0;
};

// Top-down FPN: lateral 1x1 to C channels, nearest upsample of the coarser
// merged map, add, then a 3x3 output conv. Backbone features are constants.
template <typename T>
PyramidVars<T> FpnForward(const RefinerParams<T>& params,
                          const BasicFeaturePyramid<T>& backbone);

// FPN level for an absolute-pixel box:
// clamp(floor(k0 + log2(sqrt(area) / 224)), 0, L - 1), k0 the stride-16 level.
int AssignLevel(const Box& box, std::span<const int> strides);

// One refiner: ROI Align, bottleneck blocks, average pool, MLP. boxes is
// [N, 4] normalized (cx, cy, w, h); returns deltas [N, 4].
template <typename T>
Var<T> RefinerModule(const PyramidVars<T>& pyramid, const Var<T>& boxes,
                     const RefinerStageParams<T>& stage,
                     const RefinerConfig& config);

// All stage outputs as graph values; stage i refines stage i - 1.
template <typename T>
std::vector<Var<T>> RefineForwardGraph(const PyramidVars<T>& pyramid,
                                       const Var<T>& boxes,
                                       const RefinerParams<T>& params);

// Inference: network math in T, box state in 64-bit via RefineStep.
template <typename T>
std::vector<std::vector<NormBox>> RefineForward(
    const BasicFeaturePyramid<T>& backbone, std::span<const NormBox> boxes,
    const RefinerParams<T>& params);

template <typename T>
Tensor<T> BoxesToTensor(std::span<const NormBox> boxes);
std::vector<NormBox> TensorToBoxes(const Tensor<double>& boxes);

}  // namespace refinebox

#endif  // REFINEBOX_REFINE_NET_HPP_
