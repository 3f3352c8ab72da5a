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

#include "refinebox/refine_net.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace refinebox {

void RefinerConfig::Validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("RefinerConfig: ") + name + " must be positive");
  };
  positive(model_dim, "model_dim");
  positive(bottleneck_channels, "bottleneck_channels");
  positive(num_blocks, "num_blocks");
  positive(num_refiners, "num_refiners");
  positive(roi_size, "roi_size");
  positive(top_k, "top_k");
  positive(norm_groups, "norm_groups");
  positive(sampling_ratio, "sampling_ratio");
  if (model_dim % norm_groups != 0 || bottleneck_channels % norm_groups != 0) {
    throw std::invalid_argument("RefinerConfig: channel counts must be divisible by norm_groups");
  }
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) {
    throw std::invalid_argument("RefinerConfig: clamp_eps must lie in (0, 0.5)");
  }
}

template <typename T>
void BasicFeaturePyramid<T>::Validate() const {
  if (levels.empty()) throw std::invalid_argument("FeaturePyramid: no levels");
  if (image_w <= 0 || image_h <= 0) throw std::invalid_argument("FeaturePyramid: bad image size");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    if (l.data.rank() != 3) throw std::invalid_argument("FeaturePyramid: level must be [C, H, W]");
    if (l.stride <= 0 || (i > 0 && l.stride <= levels[i - 1].stride)) {
      throw std::invalid_argument("FeaturePyramid: strides must be strictly increasing");
    }
    const std::int64_t want_h = (image_h + l.stride - 1) / l.stride;
    const std::int64_t want_w = (image_w + l.stride - 1) / l.stride;
    if (std::abs(l.data.dim(1) - want_h) > 1 || std::abs(l.data.dim(2) - want_w) > 1) {
      std::ostringstream msg;
      msg << "FeaturePyramid: level " << i << " is " << l.data.dim(1) << "x" << l.data.dim(2)
          << ", expected about " << want_h << "x" << want_w << " for stride " << l.stride;
      throw std::invalid_argument(msg.str());
    }
  }
}

template <typename T>
std::vector<int> BasicFeaturePyramid<T>::Channels() const {
  std::vector<int> c;
  for (const auto& l : levels) c.push_back(static_cast<int>(l.data.dim(0)));
  return c;
}

template <typename T>
std::vector<int> BasicFeaturePyramid<T>::Strides() const {
  std::vector<int> s;
  for (const auto& l : levels) s.push_back(l.stride);
  return s;
}

namespace {

template <typename T>
class ParamFactory {
 public:
  ParamFactory(std::uint64_t seed, bool zeros) : rng_(seed), zeros_(zeros) {}

  ConvParams<T> Conv(int cin, int cout, int k) {
    return {HeUniform({cout, cin, k, k}, cin * k * k), Filled({cout}, 0)};
  }
  ConvParams<T> Dense(int in, int out) {
    return {HeUniform({out, in}, in), Filled({out}, 0)};
  }
  ConvParams<T> ZeroDense(int in, int out) {
    return {Filled({out, in}, 0), Filled({out}, 0)};
  }
  NormParams<T> Norm(int c) { return {Filled({c}, 1), Filled({c}, 0)}; }

 private:
  Var<T> HeUniform(Shape shape, int fan_in) {
    Tensor<T> t(std::move(shape));
    if (!zeros_) {
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.data()) v = static_cast<T>(dist(rng_));
    }
    return MakeLeaf(std::move(t), true);
  }
  Var<T> Filled(Shape shape, double value) {
    return MakeLeaf(Tensor<T>(std::move(shape), zeros_ ? T(0) : static_cast<T>(value)), true);
  }

  std::mt19937_64 rng_;
  bool zeros_;
};

template <typename T>
RefinerParams<T> Build(RefinerParams<T> p, const RefinerConfig& config,
                       std::span<const int> channels, ParamFactory<T>& f) {
  const int c = config.model_dim;
  const int b = config.bottleneck_channels;
  for (int ch : channels) {
    if (ch <= 0) throw std::invalid_argument("RefinerParams: backbone channels must be positive");
    p.lateral.push_back(f.Conv(ch, c, 1));
  }
  for (std::size_t i = 0; i < channels.size(); ++i) p.output.push_back(f.Conv(c, c, 3));
  const int num_stages = config.share_weights ? 1 : config.num_refiners;
  for (int s = 0; s < num_stages; ++s) {
    RefinerStageParams<T> stage;
    for (int k = 0; k < config.num_blocks; ++k) {
      BottleneckParams<T> blk;
      blk.reduce = f.Conv(c, b, 1);
      blk.norm_reduce = f.Norm(b);
      blk.spatial = f.Conv(b, b, 3);
      blk.norm_spatial = f.Norm(b);
      blk.expand = f.Conv(b, c, 1);
      blk.norm_expand = f.Norm(c);
      stage.blocks.push_back(std::move(blk));
    }
    stage.hidden = f.Dense(c, c);
    stage.delta = f.ZeroDense(c, 4);
    p.stages.push_back(std::move(stage));
  }
  return p;
}

}  // namespace

template <typename T>
RefinerParams<T> RefinerParams<T>::Init(const RefinerConfig& config,
                                        std::span<const int> backbone_channels,
                                        std::uint64_t seed) {
  config.Validate();
  RefinerParams p;
  p.config_ = config;
  p.backbone_channels_.assign(backbone_channels.begin(), backbone_channels.end());
  ParamFactory<T> f(seed, false);
  return Build(std::move(p), config, backbone_channels, f);
}

template <typename T>
RefinerParams<T> RefinerParams<T>::Zeros(const RefinerConfig& config,
                                         std::span<const int> backbone_channels) {
  config.Validate();
  RefinerParams p;
  p.config_ = config;
  p.backbone_channels_.assign(backbone_channels.begin(), backbone_channels.end());
  ParamFactory<T> f(0, true);
  return Build(std::move(p), config, backbone_channels, f);
}

template <typename T>
const RefinerStageParams<T>& RefinerParams<T>::Stage(int index) const {
  return stages.at(config_.share_weights ? 0 : static_cast<std::size_t>(index));
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> RefinerParams<T>::Named() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  auto conv = [&](const std::string& name, const ConvParams<T>& p) {
    out.emplace_back(name + ".weight", p.weight);
    out.emplace_back(name + ".bias", p.bias);
  };
  auto norm = [&](const std::string& name, const NormParams<T>& p) {
    out.emplace_back(name + ".gamma", p.gamma);
    out.emplace_back(name + ".beta", p.beta);
  };
  for (std::size_t i = 0; i < lateral.size(); ++i) conv("fpn.lateral." + std::to_string(i), lateral[i]);
  for (std::size_t i = 0; i < output.size(); ++i) conv("fpn.output." + std::to_string(i), output[i]);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string prefix = "refiner." + std::to_string(s);
    for (std::size_t k = 0; k < stages[s].blocks.size(); ++k) {
      const auto& blk = stages[s].blocks[k];
      const std::string bp = prefix + ".block." + std::to_string(k);
      conv(bp + ".reduce", blk.reduce);
      norm(bp + ".norm_reduce", blk.norm_reduce);
      conv(bp + ".spatial", blk.spatial);
      norm(bp + ".norm_spatial", blk.norm_spatial);
      conv(bp + ".expand", blk.expand);
      norm(bp + ".norm_expand", blk.norm_expand);
    }
    conv(prefix + ".mlp.hidden", stages[s].hidden);
    conv(prefix + ".mlp.delta", stages[s].delta);
  }
  return out;
}

template <typename T>
std::size_t RefinerParams<T>::Count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : Named()) n += v.value().numel();
  return n;
}

template <typename T>
RefinerParams<T> RefinerParams<T>::Clone() const {
  return Cast<T>();
}

template <typename T>
void RefinerParams<T>::ZeroGrad() {
  for (auto& [name, v] : Named()) v.ZeroGrad();
}

template <typename T>
PyramidVars<T> FpnForward(const RefinerParams<T>& params,
                          const BasicFeaturePyramid<T>& backbone) {
  backbone.Validate();
  const std::size_t n = backbone.levels.size();
  if (n != params.lateral.size()) {
    std::ostringstream msg;
    msg << "FpnForward: parameters expect " << params.lateral.size()
        << " backbone levels, got " << n;
    throw std::invalid_argument(msg.str());
  }
  PyramidVars<T> out;
  out.image_w = backbone.image_w;
  out.image_h = backbone.image_h;
  out.strides = backbone.Strides();
  out.levels.resize(n);
  Var<T> merged;
  for (std::size_t i = n; i-- > 0;) {
    const auto& lvl = backbone.levels[i].data;
    Tensor<T> x4({1, lvl.dim(0), lvl.dim(1), lvl.dim(2)},
                 std::vector<T>(lvl.data().begin(), lvl.data().end()));
    Var<T> lateral = Conv2d(Constant(std::move(x4)), params.lateral[i].weight,
                            params.lateral[i].bias);
    if (merged.defined()) {
      lateral = Add(lateral, UpsampleNearest(merged, lateral.shape()[2], lateral.shape()[3]));
    }
    merged = lateral;
    out.levels[i] = Conv2d(merged, params.output[i].weight, params.output[i].bias);
  }
  return out;
}

int AssignLevel(const Box& box, std::span<const int> strides) {
  if (strides.empty()) throw std::invalid_argument("AssignLevel: no levels");
  int k0 = -1;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] == 16) k0 = static_cast<int>(i);
  }
  if (k0 < 0) throw std::invalid_argument("AssignLevel: pyramid has no stride-16 level");
  const int last = static_cast<int>(strides.size()) - 1;
  const double area = box.area();
  if (!(area > 0.0)) return 0;
  const double k = std::floor(k0 + std::log2(std::sqrt(area) / 224.0));
  if (k <= 0.0) return 0;
  if (k >= last) return last;
  return static_cast<int>(k);
}

template <typename T>
Var<T> RefinerModule(const PyramidVars<T>& pyramid, const Var<T>& boxes,
                     const RefinerStageParams<T>& stage,
                     const RefinerConfig& config) {
  const auto& bv = boxes.value();
  const std::size_t n = static_cast<std::size_t>(bv.dim(0));
  std::vector<int> level_of_box(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = static_cast<double>(bv[i * 4 + 2]) * pyramid.image_w;
    const double h = static_cast<double>(bv[i * 4 + 3]) * pyramid.image_h;
    level_of_box[i] = AssignLevel(Box(0.0, 0.0, w, h), pyramid.strides);
  }
  RoiAlignSpec spec{config.roi_size, config.sampling_ratio};
  Var<T> x = RoiAlignLevels<T>(pyramid.levels, pyramid.strides, boxes, level_of_box,
                               pyramid.image_w, pyramid.image_h, spec);
  const int g = config.norm_groups;
  for (const auto& blk : stage.blocks) {
    Var<T> h = Relu(GroupNorm(Conv2d(x, blk.reduce.weight, blk.reduce.bias),
                              blk.norm_reduce.gamma, blk.norm_reduce.beta, g));
    h = Relu(GroupNorm(Conv2d(h, blk.spatial.weight, blk.spatial.bias),
                       blk.norm_spatial.gamma, blk.norm_spatial.beta, g));
    h = GroupNorm(Conv2d(h, blk.expand.weight, blk.expand.bias), blk.norm_expand.gamma,
                  blk.norm_expand.beta, g);
    x = Relu(Add(x, h));
  }
  Var<T> pooled = GlobalAvgPool(x);
  Var<T> hidden = Relu(Linear(pooled, stage.hidden.weight, stage.hidden.bias));
  return Linear(hidden, stage.delta.weight, stage.delta.bias);
}

template <typename T>
std::vector<Var<T>> RefineForwardGraph(const PyramidVars<T>& pyramid,
                                       const Var<T>& boxes,
                                       const RefinerParams<T>& params) {
  const auto& cfg = params.config();
  std::vector<Var<T>> stages;
  Var<T> current = boxes;
  for (int m = 0; m < cfg.num_refiners; ++m) {
    Var<T> deltas = RefinerModule(pyramid, current, params.Stage(m), cfg);
    current = RefineBoxes(current, deltas, cfg.clamp_eps);
    stages.push_back(current);
  }
  return stages;
}

template <typename T>
Tensor<T> BoxesToTensor(std::span<const NormBox> boxes) {
  Tensor<T> t({static_cast<std::int64_t>(boxes.size()), 4});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t[i * 4 + 0] = static_cast<T>(boxes[i].cx());
    t[i * 4 + 1] = static_cast<T>(boxes[i].cy());
    t[i * 4 + 2] = static_cast<T>(boxes[i].w());
    t[i * 4 + 3] = static_cast<T>(boxes[i].h());
  }
  return t;
}

std::vector<NormBox> TensorToBoxes(const Tensor<double>& boxes) {
  std::vector<NormBox> out;
  for (std::int64_t i = 0; i < boxes.dim(0); ++i) {
    const std::size_t b = static_cast<std::size_t>(i) * 4;
    out.emplace_back(boxes[b], boxes[b + 1], boxes[b + 2], boxes[b + 3]);
  }
  return out;
}

template <typename T>
std::vector<std::vector<NormBox>> RefineForward(
    const BasicFeaturePyramid<T>& backbone, std::span<const NormBox> boxes,
    const RefinerParams<T>& params) {
  const auto& cfg = params.config();
  std::vector<std::vector<NormBox>> stages;
  if (boxes.empty()) {
    stages.assign(static_cast<std::size_t>(cfg.num_refiners), {});
    return stages;
  }
  NoGradGuard no_grad;
  const PyramidVars<T> pyramid = FpnForward(params, backbone);
  std::vector<NormBox> current(boxes.begin(), boxes.end());
  for (int m = 0; m < cfg.num_refiners; ++m) {
    const Var<T> deltas = RefinerModule(pyramid, Constant(BoxesToTensor<T>(current)),
                                        params.Stage(m), cfg);
    const auto& d = deltas.value();
    for (std::size_t i = 0; i < current.size(); ++i) {
      const BoxDelta delta{d[i * 4 + 0], d[i * 4 + 1], d[i * 4 + 2], d[i * 4 + 3]};
      current[i] = RefineStep(current[i], delta, cfg.clamp_eps);
    }
    stages.push_back(current);
  }
  return stages;
}

#define REFINEBOX_INSTANTIATE_NET(T)                                                     \
  template struct BasicFeaturePyramid<T>;                                                \
  template class RefinerParams<T>;                                                       \
  template PyramidVars<T> FpnForward(const RefinerParams<T>&,                            \
                                     const BasicFeaturePyramid<T>&);                     \
  template Var<T> RefinerModule(const PyramidVars<T>&, const Var<T>&,                    \
                                const RefinerStageParams<T>&, const RefinerConfig&);     \
  template std::vector<Var<T>> RefineForwardGraph(const PyramidVars<T>&, const Var<T>&,  \
                                                  const RefinerParams<T>&);              \
  template std::vector<std::vector<NormBox>> RefineForward(                              \
      const BasicFeaturePyramid<T>&, std::span<const NormBox>, const RefinerParams<T>&); \
  template Tensor<T> BoxesToTensor(std::span<const NormBox>);

REFINEBOX_INSTANTIATE_NET(float)
REFINEBOX_INSTANTIATE_NET(double)

#undef REFINEBOX_INSTANTIATE_NET

}  // namespace refinebox
