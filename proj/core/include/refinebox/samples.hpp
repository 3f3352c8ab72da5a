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

#ifndef REFINEBOX_SAMPLES_HPP_
#define REFINEBOX_SAMPLES_HPP_

#include <span>
#include <vector>

#include "refinebox/binary_io.hpp"
#include "refinebox/coco_io.hpp"
#include "refinebox/trainer.hpp"

namespace refinebox {

// The three on-disk artifacts a frozen detector hands over.
struct SampleFiles {
  CocoDataset dataset;
  std::vector<Detection> predictions;
  std::vector<FeatureRecord> features;
};

// Splits samples into files; images are named "<id>.jpg" and categories
// "category_<id>".
SampleFiles ToSampleFiles(std::span<const TrainSample> samples,
                          std::span<const CategoryId> categories);

// Joins files back into per-image samples, in dataset image order. Every
// image needs a feature record whose size matches; predictions and records
// for unknown images are data errors.
std::vector<TrainSample> AssembleSamples(const CocoDataset& dataset,
                                         std::span<const Detection> predictions,
                                         std::vector<FeatureRecord> features);

}  // namespace refinebox

#endif  // REFINEBOX_SAMPLES_HPP_
