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

#ifndef REFINEBOX_CONFIG_HPP_
#define REFINEBOX_CONFIG_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "refinebox/refine_net.hpp"
#include "refinebox/synth.hpp"
#include "refinebox/trainer.hpp"

namespace refinebox {

// Everything a config file can override. Keys are dotted, e.g.
// "train.epochs", "refiner.model_dim", "synth.jitter", "match.w_giou",
// "loss.w_l1"; "seed" sets both train.seed and synth.seed.
struct ToolConfig {
  TrainConfig train;
  RefinerConfig refiner;
  SynthConfig synth;

  void Validate() const;
};

// `key = value` lines; '#' starts a comment; blank lines are skipped.
// Malformed lines and duplicate keys throw DataError naming the line.
std::map<std::string, std::string> ParseKeyValues(std::string_view text);

// Applies `text` on top of `base`. Unknown keys and unparsable values throw
// DataError.
ToolConfig ParseToolConfig(std::string_view text, ToolConfig base = {});
ToolConfig LoadToolConfig(const std::filesystem::path& path, ToolConfig base = {});

// Every recognized key, sorted.
std::vector<std::string> ToolConfigKeys();

}  // namespace refinebox

#endif  // REFINEBOX_CONFIG_HPP_
