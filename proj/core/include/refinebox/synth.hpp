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

#ifndef REFINEBOX_SYNTH_HPP_
#define REFINEBOX_SYNTH_HPP_

#include <cstdint>
#include <vector>

#include "refinebox/trainer.hpp"

namespace refinebox {

// Desk-scale stand-in for a frozen detector: ground truth, jittered
// predictions and backbone-like feature maps that encode box extent.
struct SynthConfig {
  int train_images = 200;
  int val_images = 50;
  int image_width = 128;
  int image_height = 128;
  int min_objects = 1;
  int max_objects = 6;
  double min_box_size = 12.0;  // pixels
  double max_box_size = 64.0;
  int num_categories = 5;
  double jitter = 0.1;       // Std-dev of the logit-space box noise.
  double fp_rate = 0.2;      // Chance of an extra false positive per object.
  double label_noise = 0.05;  // Chance a true positive carries a wrong label.
  int feature_channels = 8;  // Per backbone level.
  double snr = 4.0;          // Signal amplitude over noise std-dev.
  std::uint64_t seed = 0;

  void Validate() const;
};

// Backbone strides of the synthetic pyramid (a ResNet-style res2..res5).
inline constexpr int kSyntheticStrides[] = {4, 8, 16, 32};

struct SyntheticData {
  std::vector<TrainSample> train;
  std::vector<TrainSample> val;
  std::vector<CategoryId> categories;  // 1..num_categories
};

// Fully determined by config.seed. Image ids are 1..train_images for the
// training split and continue for the validation split.
SyntheticData GenSynthetic(const SynthConfig& config);

}  // namespace refinebox

#endif  // REFINEBOX_SYNTH_HPP_
