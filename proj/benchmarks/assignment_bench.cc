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

#include "refinebox/assignment.hpp"
#include "refinebox/box.hpp"

namespace refinebox {
namespace {

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  CostMatrix m(n, n / 2 + 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m.Set(i, j, u(rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(Hungarian(m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_Giou(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> p(0, 100), e(1, 50);
  std::vector<Box> boxes;
  for (int i = 0; i < 1024; ++i) {
    const double x = p(rng), y = p(rng);
    boxes.emplace_back(x, y, x + e(rng), y + e(rng));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Giou(boxes[i & 1023], boxes[(i * 7 + 3) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Giou);

}  // namespace
}  // namespace refinebox
