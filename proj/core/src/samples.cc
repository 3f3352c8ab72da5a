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

#include "refinebox/samples.hpp"

#include <map>

#include "refinebox/errors.hpp"

namespace refinebox {

SampleFiles ToSampleFiles(std::span<const TrainSample> samples,
                          std::span<const CategoryId> categories) {
  SampleFiles out;
  for (CategoryId c : categories) {
    out.dataset.categories.push_back({c, "category_" + std::to_string(c)});
  }
  for (const auto& s : samples) {
    out.dataset.images.push_back({s.image_id, s.features.image_w, s.features.image_h,
                                  std::to_string(s.image_id) + ".jpg"});
    out.dataset.annotations.insert(out.dataset.annotations.end(), s.gts.begin(), s.gts.end());
    out.predictions.insert(out.predictions.end(), s.preds.begin(), s.preds.end());
    out.features.push_back({s.image_id, s.features});
  }
  return out;
}

std::vector<TrainSample> AssembleSamples(const CocoDataset& dataset,
                                         std::span<const Detection> predictions,
                                         std::vector<FeatureRecord> features) {
  std::map<ImageId, std::size_t> slot;
  std::vector<TrainSample> out(dataset.images.size());
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    slot[dataset.images[i].id] = i;
    out[i].image_id = dataset.images[i].id;
  }
  std::vector<bool> seen(out.size(), false);
  for (auto& rec : features) {
    auto it = slot.find(rec.image_id);
    if (it == slot.end()) {
      throw DataError("features: record for unknown image id " + std::to_string(rec.image_id));
    }
    const CocoImage& im = dataset.images[it->second];
    if (seen[it->second]) {
      throw DataError("features: duplicate record for image id " + std::to_string(im.id));
    }
    if (rec.pyramid.image_w != im.width || rec.pyramid.image_h != im.height) {
      throw DataError("features: image id " + std::to_string(im.id) +
                      " size disagrees with the annotation file");
    }
    seen[it->second] = true;
    out[it->second].features = std::move(rec.pyramid);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!seen[i]) {
      throw DataError("features: no record for image id " + std::to_string(out[i].image_id));
    }
  }
  for (const auto& g : dataset.annotations) out[slot.at(g.image_id)].gts.push_back(g);
  for (const auto& d : predictions) {
    auto it = slot.find(d.image_id);
    if (it == slot.end()) {
      throw DataError("predictions: unknown image id " + std::to_string(d.image_id));
    }
    out[it->second].preds.push_back(d);
  }
  return out;
}

}  // namespace refinebox
