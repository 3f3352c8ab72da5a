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

#ifndef REFINEBOX_COCO_IO_HPP_
#define REFINEBOX_COCO_IO_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refinebox/detection.hpp"
#include "refinebox/ideal.hpp"

namespace refinebox {

struct CocoImage {
  ImageId id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;

  friend bool operator==(const CocoImage&, const CocoImage&) = default;
};

struct CocoCategory {
  CategoryId id = 0;
  std::string name;

  friend bool operator==(const CocoCategory&, const CocoCategory&) = default;
};

struct CocoDataset {
  std::vector<CocoImage> images;
  std::vector<GtInstance> annotations;
  std::vector<CocoCategory> categories;

  ImageSizes Sizes() const;
  std::vector<CategoryId> CategoryIds() const;
};

// Parse failures throw DataError whose message starts with the JSON path of
// the offending value, e.g. "annotations[3].bbox[2]: negative extent".
CocoDataset ParseCoco(std::string_view text);
CocoDataset LoadCoco(const std::filesystem::path& path);
std::string SerializeCoco(const CocoDataset& dataset);
void SaveCoco(const CocoDataset& dataset, const std::filesystem::path& path);

// A flat results array. With a dataset, image and category ids must resolve
// against it. Unknown members of each record land in Detection::extra.
std::vector<Detection> ParseResults(std::string_view text,
                                    const CocoDataset* dataset = nullptr);
std::vector<Detection> LoadResults(const std::filesystem::path& path,
                                   const CocoDataset* dataset = nullptr);
// Boxes are written as [x, y, w, h] with w, h chosen so that reading them
// back reproduces the corners exactly.
std::string SerializeResults(std::span<const Detection> detections);
void SaveResults(std::span<const Detection> detections,
                 const std::filesystem::path& path);

// Whole-file helpers. WriteFileAtomic writes a sibling temp file and renames
// it over the target.
std::string ReadFile(const std::filesystem::path& path);
void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace refinebox

#endif  // REFINEBOX_COCO_IO_HPP_
