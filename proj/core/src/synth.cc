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

#include "refinebox/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace refinebox {

void SynthConfig::Validate() const {
  if (train_images < 0 || val_images < 0 || train_images + val_images == 0) {
    throw std::invalid_argument("SynthConfig: image counts must be nonnegative and not both zero");
  }
  if (image_width < 32 || image_height < 32) throw std::invalid_argument("SynthConfig: image too small");
  if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("SynthConfig: bad object range");
  if (!(min_box_size > 0.0) || max_box_size < min_box_size ||
      max_box_size > std::min(image_width, image_height)) {
    throw std::invalid_argument("SynthConfig: bad box size range");
  }
  if (num_categories < 1) throw std::invalid_argument("SynthConfig: num_categories must be positive");
  if (!(jitter >= 0.0 && jitter < 0.5)) throw std::invalid_argument("SynthConfig: jitter must lie in [0, 0.5)");
  if (!(fp_rate >= 0.0 && fp_rate <= 1.0)) throw std::invalid_argument("SynthConfig: fp_rate must lie in [0, 1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw std::invalid_argument("SynthConfig: label_noise must lie in [0, 1]");
  if (feature_channels < 1) throw std::invalid_argument("SynthConfig: feature_channels must be positive");
  if (!(snr > 0.0)) throw std::invalid_argument("SynthConfig: snr must be positive");
}

namespace {

double Logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Feature patterns; channel c carries pattern c % kPatterns.
constexpr int kPatterns = 8;

void RenderLevel(const std::vector<GtInstance>& gts, int stride, int channels,
                 double noise_std, std::mt19937_64& rng, FeatureLevel<float>& level,
                 int image_w, int image_h) {
  const std::int64_t h = (image_h + stride - 1) / stride;
  const std::int64_t w = (image_w + stride - 1) / stride;
  level.stride = stride;
  level.data = Tensor<float>({channels, h, w});
  const double tau = 0.5 * stride;
  std::vector<double> acc(static_cast<std::size_t>(kPatterns * h * w), 0.0);
  for (const auto& g : gts) {
    const Box& b = g.box;
    const double cx = 0.5 * (b.x1() + b.x2()), cy = 0.5 * (b.y1() + b.y2());
    const double hw = std::max(0.5 * b.width(), 1.0), hh = std::max(0.5 * b.height(), 1.0);
    for (std::int64_t i = 0; i < h; ++i) {
      const double py = (static_cast<double>(i) + 0.5) * stride;
      const double soft_y = Logistic((py - b.y1()) / tau) * Logistic((b.y2() - py) / tau);
      for (std::int64_t j = 0; j < w; ++j) {
        const double px = (static_cast<double>(j) + 0.5) * stride;
        const double soft_x = Logistic((px - b.x1()) / tau) * Logistic((b.x2() - px) / tau);
        const double mask = soft_x * soft_y;
        auto gauss = [tau](double d) { return std::exp(-0.5 * d * d / (tau * tau)); };
        const double values[kPatterns] = {
            mask,
            gauss(px - b.x1()) * soft_y,
            gauss(px - b.x2()) * soft_y,
            gauss(py - b.y1()) * soft_x,
            gauss(py - b.y2()) * soft_x,
            mask * std::clamp((px - cx) / hw, -1.5, 1.5),
            mask * std::clamp((py - cy) / hh, -1.5, 1.5),
            mask * std::sqrt(b.area()) / 64.0,
        };
        for (int p = 0; p < kPatterns; ++p) {
          acc[static_cast<std::size_t>((p * h + i) * w + j)] += values[p];
        }
      }
    }
  }
  std::normal_distribution<double> noise(0.0, noise_std);
  for (int c = 0; c < channels; ++c) {
    const int p = c % kPatterns;
    for (std::int64_t k = 0; k < h * w; ++k) {
      level.data[static_cast<std::size_t>(c * h * w + k)] =
          static_cast<float>(acc[static_cast<std::size_t>(p * h * w + k)] + noise(rng));
    }
  }
}

std::map<CategoryId, double> BackgroundProbs(int num_categories, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> low(0.0, 0.05);
  std::map<CategoryId, double> probs;
  for (int c = 1; c <= num_categories; ++c) probs[c] = low(rng);
  return probs;
}

TrainSample MakeImage(const SynthConfig& cfg, ImageId id, std::mt19937_64& rng) {
  TrainSample s;
  s.image_id = id;
  const double iw = cfg.image_width, ih = cfg.image_height;
  std::uniform_int_distribution<int> count(cfg.min_objects, cfg.max_objects);
  std::uniform_real_distribution<double> size(cfg.min_box_size, cfg.max_box_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> category(1, cfg.num_categories);
  std::normal_distribution<double> logit_noise(0.0, 1.0);

  auto random_box = [&]() {
    const double bw = size(rng), bh = size(rng);
    const double x = unit(rng) * (iw - bw), y = unit(rng) * (ih - bh);
    return Box(x, y, x + bw, y + bh);
  };

  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    GtInstance g;
    g.id = id * 1000 + k + 1;
    g.image_id = id;
    g.category_id = category(rng);
    g.box = random_box();
    g.area = g.box.area();
    s.gts.push_back(g);
  }

  for (const auto& g : s.gts) {
    const NormBox truth = ToNormBox(g.box, iw, ih);
    const BoxDelta eps{cfg.jitter * logit_noise(rng), cfg.jitter * logit_noise(rng),
                       cfg.jitter * logit_noise(rng), cfg.jitter * logit_noise(rng)};
    const NormBox jittered = RefineStep(truth, eps);
    Detection d;
    d.image_id = id;
    d.box = jittered == truth ? g.box : ToBox(jittered, iw, ih);
    const double spread = (std::abs(eps.dcx) + std::abs(eps.dcy) + std::abs(eps.dw) +
                           std::abs(eps.dh)) / 4.0;
    d.score = std::clamp(0.9 - 2.0 * spread + 0.1 * (unit(rng) - 0.5), 0.05, 0.99);
    d.category_id = g.category_id;
    auto probs = BackgroundProbs(cfg.num_categories, rng);
    if (cfg.num_categories > 1 && unit(rng) < cfg.label_noise) {
      std::uniform_int_distribution<int> other(1, cfg.num_categories - 1);
      CategoryId wrong = other(rng);
      if (wrong >= g.category_id) ++wrong;
      d.category_id = wrong;
      probs[g.category_id] = d.score * (0.3 + 0.6 * unit(rng));
    }
    probs[d.category_id] = d.score;
    d.class_probs = std::move(probs);
    s.preds.push_back(std::move(d));

    if (unit(rng) < cfg.fp_rate) {
      Detection fp;
      fp.image_id = id;
      fp.box = random_box();
      fp.category_id = category(rng);
      fp.score = 0.05 + 0.45 * unit(rng);
      auto fp_probs = BackgroundProbs(cfg.num_categories, rng);
      fp_probs[fp.category_id] = fp.score;
      fp.class_probs = std::move(fp_probs);
      s.preds.push_back(std::move(fp));
    }
  }

  s.features.image_w = cfg.image_width;
  s.features.image_h = cfg.image_height;
  const double noise_std = 1.0 / cfg.snr;
  for (int stride : kSyntheticStrides) {
    FeatureLevel<float> level;
    RenderLevel(s.gts, stride, cfg.feature_channels, noise_std, rng, level, cfg.image_width,
                cfg.image_height);
    s.features.levels.push_back(std::move(level));
  }
  return s;
}

}  // namespace

SyntheticData GenSynthetic(const SynthConfig& config) {
  config.Validate();
  SyntheticData data;
  for (int c = 1; c <= config.num_categories; ++c) data.categories.push_back(c);
  std::mt19937_64 rng(config.seed);
  ImageId next = 1;
  for (int i = 0; i < config.train_images; ++i) data.train.push_back(MakeImage(config, next++, rng));
  for (int i = 0; i < config.val_images; ++i) data.val.push_back(MakeImage(config, next++, rng));
  return data;
}

}  // namespace refinebox
