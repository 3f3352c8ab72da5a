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

#ifndef REFINEBOX_DETECTION_HPP_
#define REFINEBOX_DETECTION_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "refinebox/box.hpp"

namespace refinebox {

using ImageId = std::int64_t;
using CategoryId = std::int64_t;

// A scored, class-labeled predicted box.
struct Detection {
  ImageId image_id = 0;
  CategoryId category_id = 0;
  double score = 0.0;
  Box box;
  // Per-category probabilities, when the producer exported them.
  std::optional<std::map<CategoryId, double>> class_probs;
  // Unknown JSON members of the source record, serialized as a JSON object
  // ("" when there were none). Carried so a read-then-write keeps them.
  std::string extra;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GtInstance {
  std::int64_t id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  Box box;
  double area = 0.0;
  bool iscrowd = false;

  friend bool operator==(const GtInstance&, const GtInstance&) = default;
};

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

}  // namespace refinebox

#endif  // REFINEBOX_DETECTION_HPP_
