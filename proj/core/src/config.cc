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

#include "refinebox/config.hpp"

#include <charconv>
#include <functional>
#include <stdexcept>

#include "refinebox/coco_io.hpp"
#include "refinebox/errors.hpp"

namespace refinebox {

void ToolConfig::Validate() const {
  train.Validate();
  refiner.Validate();
  synth.Validate();
}

namespace {

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw DataError("config: bad value for " + key + ": \"" + value + "\"");
  }
  return out;
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw DataError("config: bad boolean for " + key + ": \"" + value + "\"");
}

using Setter = std::function<void(ToolConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter Set(T ToolConfig::*section, auto field) {
  return [section, field](ToolConfig& c, const std::string& key, const std::string& value) {
    auto& target = (c.*section).*field;
    using V = std::remove_reference_t<decltype(target)>;
    if constexpr (std::is_same_v<V, bool>) {
      target = ParseBool(key, value);
    } else {
      target = ParseNumber<V>(key, value);
    }
  };
}

template <typename Outer, typename Inner>
Setter SetNested(Outer TrainConfig::*member, Inner field) {
  return [member, field](ToolConfig& c, const std::string& key, const std::string& value) {
    auto& target = (c.train.*member).*field;
    target = ParseNumber<std::remove_reference_t<decltype(target)>>(key, value);
  };
}

const std::map<std::string, Setter>& Setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["train.epochs"] = Set(&ToolConfig::train, &TrainConfig::epochs);
    t["train.batch_size"] = Set(&ToolConfig::train, &TrainConfig::batch_size);
    t["train.learning_rate"] = Set(&ToolConfig::train, &TrainConfig::learning_rate);
    t["train.weight_decay"] = Set(&ToolConfig::train, &TrainConfig::weight_decay);
    t["train.clip_max_norm"] = Set(&ToolConfig::train, &TrainConfig::clip_max_norm);
    t["train.lr_drop_epoch"] = Set(&ToolConfig::train, &TrainConfig::lr_drop_epoch);
    t["train.lr_drop_factor"] = Set(&ToolConfig::train, &TrainConfig::lr_drop_factor);
    t["train.adam_beta1"] = Set(&ToolConfig::train, &TrainConfig::adam_beta1);
    t["train.adam_beta2"] = Set(&ToolConfig::train, &TrainConfig::adam_beta2);
    t["train.adam_eps"] = Set(&ToolConfig::train, &TrainConfig::adam_eps);
    t["train.seed"] = Set(&ToolConfig::train, &TrainConfig::seed);
    t["match.w_cls"] = SetNested(&TrainConfig::match, &MatchWeights::w_cls);
    t["match.w_l1"] = SetNested(&TrainConfig::match, &MatchWeights::w_l1);
    t["match.w_giou"] = SetNested(&TrainConfig::match, &MatchWeights::w_giou);
    t["loss.w_l1"] = SetNested(&TrainConfig::loss, &LossWeights::w_l1);
    t["loss.w_giou"] = SetNested(&TrainConfig::loss, &LossWeights::w_giou);
    t["refiner.model_dim"] = Set(&ToolConfig::refiner, &RefinerConfig::model_dim);
    t["refiner.bottleneck_channels"] =
        Set(&ToolConfig::refiner, &RefinerConfig::bottleneck_channels);
    t["refiner.num_blocks"] = Set(&ToolConfig::refiner, &RefinerConfig::num_blocks);
    t["refiner.num_refiners"] = Set(&ToolConfig::refiner, &RefinerConfig::num_refiners);
    t["refiner.roi_size"] = Set(&ToolConfig::refiner, &RefinerConfig::roi_size);
    t["refiner.share_weights"] = Set(&ToolConfig::refiner, &RefinerConfig::share_weights);
    t["refiner.top_k"] = Set(&ToolConfig::refiner, &RefinerConfig::top_k);
    t["refiner.clamp_eps"] = Set(&ToolConfig::refiner, &RefinerConfig::clamp_eps);
    t["refiner.norm_groups"] = Set(&ToolConfig::refiner, &RefinerConfig::norm_groups);
    t["refiner.sampling_ratio"] = Set(&ToolConfig::refiner, &RefinerConfig::sampling_ratio);
    t["synth.train_images"] = Set(&ToolConfig::synth, &SynthConfig::train_images);
    t["synth.val_images"] = Set(&ToolConfig::synth, &SynthConfig::val_images);
    t["synth.image_width"] = Set(&ToolConfig::synth, &SynthConfig::image_width);
    t["synth.image_height"] = Set(&ToolConfig::synth, &SynthConfig::image_height);
    t["synth.min_objects"] = Set(&ToolConfig::synth, &SynthConfig::min_objects);
    t["synth.max_objects"] = Set(&ToolConfig::synth, &SynthConfig::max_objects);
    t["synth.min_box_size"] = Set(&ToolConfig::synth, &SynthConfig::min_box_size);
    t["synth.max_box_size"] = Set(&ToolConfig::synth, &SynthConfig::max_box_size);
    t["synth.num_categories"] = Set(&ToolConfig::synth, &SynthConfig::num_categories);
    t["synth.jitter"] = Set(&ToolConfig::synth, &SynthConfig::jitter);
    t["synth.fp_rate"] = Set(&ToolConfig::synth, &SynthConfig::fp_rate);
    t["synth.label_noise"] = Set(&ToolConfig::synth, &SynthConfig::label_noise);
    t["synth.feature_channels"] = Set(&ToolConfig::synth, &SynthConfig::feature_channels);
    t["synth.snr"] = Set(&ToolConfig::synth, &SynthConfig::snr);
    t["synth.seed"] = Set(&ToolConfig::synth, &SynthConfig::seed);
    t["seed"] = [](ToolConfig& c, const std::string& key, const std::string& value) {
      c.train.seed = c.synth.seed = ParseNumber<std::uint64_t>(key, value);
    };
    return t;
  }();
  return table;
}

}  // namespace

std::map<std::string, std::string> ParseKeyValues(std::string_view text) {
  std::map<std::string, std::string> out;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw DataError(where + ": expected key = value");
    const std::string key(Trim(line.substr(0, eq)));
    const std::string value(Trim(line.substr(eq + 1)));
    if (key.empty()) throw DataError(where + ": empty key");
    if (value.empty()) throw DataError(where + ": empty value for " + key);
    if (!out.emplace(key, value).second) throw DataError(where + ": duplicate key " + key);
  }
  return out;
}

ToolConfig ParseToolConfig(std::string_view text, ToolConfig base) {
  const auto& setters = Setters();
  const auto values = ParseKeyValues(text);
  // "seed" first so explicit train.seed / synth.seed win.
  if (auto it = values.find("seed"); it != values.end()) setters.at("seed")(base, it->first, it->second);
  for (const auto& [key, value] : values) {
    if (key == "seed") continue;
    auto it = setters.find(key);
    if (it == setters.end()) throw DataError("config: unknown key " + key);
    it->second(base, key, value);
  }
  try {
    base.Validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return base;
}

ToolConfig LoadToolConfig(const std::filesystem::path& path, ToolConfig base) {
  return ParseToolConfig(ReadFile(path), std::move(base));
}

std::vector<std::string> ToolConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& [key, setter] : Setters()) keys.push_back(key);
  return keys;
}

}  // namespace refinebox
