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

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "refinebox/errors.hpp"
#include "refinebox/synth.hpp"
#include "refinebox/trainer.hpp"

namespace refinebox {
namespace {

Var<double> Row(double cx, double cy, double w, double h) {
  Tensor<double> t({1, 4});
  t[0] = cx, t[1] = cy, t[2] = w, t[3] = h;
  return Constant(t);
}

TEST(RegressionLossTest, HandValues) {
  const Var<double> t = Row(0.5, 0.5, 0.5, 0.5);
  const std::vector<Var<double>> same = {t};
  EXPECT_EQ(RegressionLoss<double>(same, t.value(), LossWeights{}).value()[0], 0.0);
  // L1 = 0.1 and the box nests inside the target, so GIoU = IoU = 0.8.
  const std::vector<Var<double>> one = {Row(0.5, 0.5, 0.5, 0.4)};
  EXPECT_NEAR(RegressionLoss<double>(one, t.value(), LossWeights{5, 2}).value()[0], 0.9, 1e-12);
  // Stages add up; the normalizer divides.
  const std::vector<Var<double>> two = {Row(0.5, 0.5, 0.5, 0.4), Row(0.5, 0.5, 0.5, 0.4)};
  EXPECT_NEAR(RegressionLoss<double>(two, t.value(), LossWeights{}, 4.0).value()[0], 0.45,
              1e-12);
  const std::vector<Var<double>> none = {Constant(Tensor<double>({0, 4}))};
  EXPECT_EQ(RegressionLoss<double>(none, Tensor<double>({0, 4}), LossWeights{}).value()[0], 0.0);
  EXPECT_THROW((LossWeights{0, 0}.Validate()), std::invalid_argument);
}

TEST(RegressionLossTest, NonNegativeAndZeroOnlyAtTargets) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(0.1, 0.9), s(0.01, 0.5);
  for (int i = 0; i < 500; ++i) {
    const Var<double> a = Row(c(rng), c(rng), s(rng), s(rng));
    const Var<double> b = Row(c(rng), c(rng), s(rng), s(rng));
    const std::vector<Var<double>> st = {a};
    EXPECT_GT(RegressionLoss<double>(st, b.value(), LossWeights{}).value()[0], 0.0);
    EXPECT_EQ(RegressionLoss<double>(st, a.value(), LossWeights{}).value()[0], 0.0);
  }
}

TrainSample Sample(int preds, int gts) {
  SynthConfig cfg;
  cfg.train_images = 1;
  cfg.val_images = 0;
  cfg.feature_channels = 2;
  TrainSample s = GenSynthetic(cfg).train[0];
  s.preds.clear();
  s.gts.clear();
  for (int i = 0; i < gts; ++i) {
    GtInstance g;
    g.id = i + 1;
    g.image_id = s.image_id;
    g.category_id = 1;
    g.box = Box(10 + 20 * i, 10, 25 + 20 * i, 40);
    g.area = g.box.area();
    s.gts.push_back(g);
  }
  for (int i = 0; i < preds; ++i) {
    Detection d;
    d.image_id = s.image_id;
    d.category_id = 1;
    d.score = 0.9 - 0.1 * i;
    d.box = Box(11 + 20 * i, 12, 24 + 20 * i, 38);
    s.preds.push_back(d);
  }
  return s;
}

TEST(BuildTargetsTest, Cardinality) {
  EXPECT_TRUE(BuildTargets(Sample(3, 0), {}).indices.empty());
  const TrainSample perfect = [] {
    TrainSample s = Sample(0, 3);
    for (const auto& g : s.gts) {
      Detection d;
      d.image_id = s.image_id;
      d.category_id = 1;
      d.score = 0.9;
      d.box = g.box;
      s.preds.push_back(d);
    }
    return s;
  }();
  const Targets all = BuildTargets(perfect, {});
  ASSERT_EQ(all.indices, (std::vector<std::size_t>{0, 1, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(all.boxes[i], ToNormBox(perfect.gts[i].box, 128, 128));
  }
  EXPECT_EQ(BuildTargets(Sample(5, 3), {}).indices.size(), 3u);
}

TEST(RefineTopKTest, Contracts) {
  SynthConfig cfg;
  cfg.train_images = 1;
  cfg.val_images = 0;
  cfg.max_objects = 6;
  cfg.min_objects = 6;
  const TrainSample s = GenSynthetic(cfg).train[0];
  const int n = static_cast<int>(s.preds.size());
  auto p = RefinerParams<float>::Init(RefinerConfig{}, s.features.Channels(), 1);

  for (int k : {0, 1, 3, n, n + 10}) EXPECT_EQ(RefineTopK(s.features, s.preds, p, k), s.preds);

  for (auto& v : p.stages[0].delta.weight.mutable_value().data()) v = 0.02f;
  for (auto& v : p.stages[0].delta.bias.mutable_value().data()) v = 0.3f;
  EXPECT_EQ(RefineTopK(s.features, s.preds, p, 0), s.preds);
  const auto all = RefineTopK(s.features, s.preds, p, n + 5);
  ASSERT_EQ(all.size(), s.preds.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_NE(all[i].box, s.preds[i].box);
    EXPECT_EQ(all[i].score, s.preds[i].score);
    EXPECT_EQ(all[i].category_id, s.preds[i].category_id);
    EXPECT_EQ(all[i].class_probs, s.preds[i].class_probs);
  }
  // K = 2 touches exactly the two best-scored predictions.
  const auto two = RefineTopK(s.features, s.preds, p, 2);
  std::vector<std::size_t> order(s.preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return s.preds[a].score > s.preds[b].score; });
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t i = order[r];
    if (r < 2) {
      // Batch size changes float rounding only.
      EXPECT_NEAR(two[i].box.x1(), all[i].box.x1(), 1e-4);
      EXPECT_NEAR(two[i].box.y1(), all[i].box.y1(), 1e-4);
      EXPECT_NEAR(two[i].box.x2(), all[i].box.x2(), 1e-4);
      EXPECT_NEAR(two[i].box.y2(), all[i].box.y2(), 1e-4);
    } else {
      EXPECT_EQ(two[i].box, s.preds[i].box);
    }
  }
}

SynthConfig SmallSynth() {
  SynthConfig cfg;
  cfg.train_images = 24;
  cfg.val_images = 8;
  return cfg;
}

TrainConfig QuickTrain() {
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 8;
  return t;
}

TEST(TrainTest, ZeroLearningRateKeepsParameters) {
  const auto data = GenSynthetic(SmallSynth());
  TrainConfig t = QuickTrain();
  t.learning_rate = 0.0;
  const auto init = RefinerParams<float>::Init(RefinerConfig{}, data.train[0].features.Channels(),
                                               t.seed);
  const TrainResult r = Train(data.train, t, RefinerConfig{});
  const auto a = init.Named(), b = r.params.Named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].second.value(), b[i].second.value()) << a[i].first;
  }
}

TEST(TrainTest, FrozenInputsAndDeterminism) {
  const auto data = GenSynthetic(SmallSynth());
  const std::uint32_t before = SampleChecksum(data.train);
  TrainConfig t = QuickTrain();
  t.learning_rate = 1e-3;
  const TrainResult a = Train(data.train, t, RefinerConfig{},
                              ValidationSplit{data.val, data.categories});
  EXPECT_EQ(SampleChecksum(data.train), before);
  const TrainResult b = Train(data.train, t, RefinerConfig{});
  for (std::size_t i = 0; i < a.params.Named().size(); ++i) {
    EXPECT_EQ(a.params.Named()[i].second.value(), b.params.Named()[i].second.value());
  }
  ASSERT_EQ(a.epochs.size(), 1u);
  ASSERT_TRUE(a.epochs[0].validation.has_value());
  EXPECT_FALSE(b.epochs[0].validation.has_value());
  EXPECT_EQ(a.epochs[0].train_loss, b.epochs[0].train_loss);
  EXPECT_GT(a.epochs[0].validation->matched, 0u);
}

TEST(TrainTest, LearningRateSchedule) {
  const auto data = GenSynthetic(SmallSynth());
  TrainConfig t = QuickTrain();
  t.epochs = 3;
  t.lr_drop_epoch = 3;
  t.learning_rate = 1e-4;
  std::vector<double> seen;
  const TrainResult r = Train(data.train, t, RefinerConfig{}, std::nullopt,
                              [&](const EpochMetrics& m) { seen.push_back(m.learning_rate); });
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen[0], 1e-4);
  EXPECT_EQ(seen[1], 1e-4);
  EXPECT_NEAR(seen[2], 1e-5, 1e-20);
  EXPECT_EQ(r.epochs.size(), 3u);
}

TEST(TrainTest, NonFiniteAbortsWithBatchId) {
  auto data = GenSynthetic(SmallSynth());
  for (auto& v : data.train[5].features.levels[0].data.data()) v = 3e38f;
  try {
    Train(data.train, QuickTrain(), RefinerConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Train(std::span<const TrainSample>{}, QuickTrain(), RefinerConfig{}),
               std::invalid_argument);
}

// Later stages must not systematically damage boxes once trained.
TEST(TrainTest, LaterStagesDoNotDamageBoxes) {
  SynthConfig cfg;
  cfg.train_images = 100;
  cfg.val_images = 30;
  const auto data = GenSynthetic(cfg);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 8;
  t.learning_rate = 1e-3;
  const TrainResult r = Train(data.train, t, RefinerConfig{},
                              ValidationSplit{data.val, data.categories});
  const auto& v = *r.epochs.back().validation;
  EXPECT_GE(v.mean_iou_refined, v.mean_iou_first_stage - 0.005);
  EXPECT_GT(v.mean_iou_refined, v.mean_iou_raw);
}

TEST(SynthTest, DeterministicAndExactWithoutNoise) {
  SynthConfig cfg;
  cfg.train_images = 10;
  cfg.val_images = 2;
  const auto a = GenSynthetic(cfg), b = GenSynthetic(cfg);
  EXPECT_EQ(SampleChecksum(a.train), SampleChecksum(b.train));
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].preds, b.train[i].preds);
    EXPECT_EQ(a.train[i].gts, b.train[i].gts);
    EXPECT_EQ(a.train[i].features.levels[0].data, b.train[i].features.levels[0].data);
  }
  cfg.seed = 1;
  EXPECT_NE(SampleChecksum(GenSynthetic(cfg).train), SampleChecksum(a.train));

  cfg.jitter = 0.0;
  cfg.fp_rate = 0.0;
  cfg.label_noise = 0.0;
  const auto exact = GenSynthetic(cfg);
  std::vector<Detection> dets;
  std::vector<GtInstance> gts;
  for (const auto& s : exact.train) {
    ASSERT_EQ(s.preds.size(), s.gts.size());
    for (std::size_t i = 0; i < s.preds.size(); ++i) {
      EXPECT_EQ(s.preds[i].box, s.gts[i].box);
      EXPECT_EQ(s.preds[i].category_id, s.gts[i].category_id);
    }
    dets.insert(dets.end(), s.preds.begin(), s.preds.end());
    gts.insert(gts.end(), s.gts.begin(), s.gts.end());
    s.features.Validate();
  }
  EXPECT_EQ(CocoEval(dets, gts, exact.categories).ap, 1.0);
}

TEST(SynthTest, Validation) {
  SynthConfig cfg;
  cfg.jitter = 0.5;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.max_objects = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.snr = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace refinebox
