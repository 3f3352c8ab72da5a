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

#include <benchmark/benchmark.h>

#include "refinebox/coco_eval.hpp"
#include "refinebox/synth.hpp"

namespace refinebox {
namespace {

void BM_CocoEval(benchmark::State& state) {
  SynthConfig cfg;
  cfg.train_images = static_cast<int>(state.range(0));
  cfg.val_images = 0;
  cfg.feature_channels = 1;
  const SyntheticData data = GenSynthetic(cfg);
  std::vector<Detection> dets;
  std::vector<GtInstance> gts;
  for (const auto& s : data.train) {
    dets.insert(dets.end(), s.preds.begin(), s.preds.end());
    gts.insert(gts.end(), s.gts.begin(), s.gts.end());
  }
  for (auto _ : state) benchmark::DoNotOptimize(CocoEval(dets, gts, data.categories));
  state.counters["detections"] = static_cast<double>(dets.size());
}
BENCHMARK(BM_CocoEval)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace refinebox
