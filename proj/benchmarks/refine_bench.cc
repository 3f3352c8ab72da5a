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

#include <random>

#include <benchmark/benchmark.h>

#include "refinebox/ops.hpp"
#include "refinebox/refine_net.hpp"
#include "refinebox/synth.hpp"
#include "refinebox/trainer.hpp"

namespace refinebox {
namespace {

void BM_RoiAlign(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  Tensor<double> f({64, 32, 32});
  for (auto& v : f.data()) v = g(rng);
  const Box box(3.3, 5.1, 27.9, 21.4);
  for (auto _ : state) benchmark::DoNotOptimize(RoiAlign(f, box, RoiAlignSpec{}));
}
BENCHMARK(BM_RoiAlign);

// Inference over one synthetic image at the default network size.
void BM_RefineTopK(benchmark::State& state) {
  SynthConfig cfg;
  cfg.train_images = 1;
  cfg.val_images = 0;
  cfg.min_objects = cfg.max_objects = static_cast<int>(state.range(0));
  const TrainSample s = GenSynthetic(cfg).train[0];
  auto p = RefinerParams<float>::Init(RefinerConfig{}, s.features.Channels(), 1);
  for (auto& v : p.stages[0].delta.weight.mutable_value().data()) v = 0.01f;
  for (auto _ : state) {
    benchmark::DoNotOptimize(RefineTopK(s.features, s.preds, p, 100));
  }
  state.counters["boxes"] = static_cast<double>(s.preds.size());
}
BENCHMARK(BM_RefineTopK)->Arg(1)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace refinebox
