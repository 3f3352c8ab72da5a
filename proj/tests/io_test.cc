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

#include <filesystem>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "refinebox/binary_io.hpp"
#include "refinebox/coco_io.hpp"
#include "refinebox/config.hpp"
#include "refinebox/errors.hpp"
#include "refinebox/report.hpp"
#include "refinebox/samples.hpp"
#include "refinebox/synth.hpp"

namespace refinebox {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("refinebox_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

constexpr const char* kMinimal = R"({
  "images": [{"id": 1, "width": 100, "height": 80, "file_name": "a.jpg"}],
  "annotations": [{"id": 7, "image_id": 1, "category_id": 3, "bbox": [10.5, 20, 30, 40],
                   "area": 1200, "iscrowd": 0}],
  "categories": [{"id": 3, "name": "cat"}]
})";

std::string ErrorOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(CocoIoTest, MinimalDataset) {
  const CocoDataset ds = ParseCoco(kMinimal);
  ASSERT_EQ(ds.annotations.size(), 1u);
  const GtInstance& g = ds.annotations[0];
  EXPECT_EQ(g.box, Box(10.5, 20, 40.5, 60));
  EXPECT_EQ(g.id, 7);
  EXPECT_EQ(g.category_id, 3);
  EXPECT_EQ(g.area, 1200.0);
  EXPECT_FALSE(g.iscrowd);
  EXPECT_EQ(ds.Sizes().at(1).width, 100.0);
  EXPECT_EQ(ds.CategoryIds(), std::vector<CategoryId>{3});
  const CocoDataset again = ParseCoco(SerializeCoco(ds));
  EXPECT_EQ(again.annotations, ds.annotations);
  EXPECT_EQ(again.images, ds.images);
  EXPECT_EQ(again.categories, ds.categories);
}

TEST(CocoIoTest, DescriptiveErrors) {
  std::string bad = kMinimal;
  bad.replace(bad.find("\"image_id\": 1"), 13, "\"image_id\": 42");
  const std::string e1 = ErrorOf([&] { ParseCoco(bad); });
  EXPECT_NE(e1.find("annotations[0].image_id"), std::string::npos) << e1;
  EXPECT_NE(e1.find("42"), std::string::npos) << e1;

  std::string neg = kMinimal;
  neg.replace(neg.find("30, 40"), 6, "-3, 40");
  const std::string e2 = ErrorOf([&] { ParseCoco(neg); });
  EXPECT_NE(e2.find("annotations[0].bbox[2]"), std::string::npos) << e2;

  EXPECT_NE(ErrorOf([] { ParseCoco("{\"images\": [}"); }).find("malformed"), std::string::npos);
  EXPECT_NE(ErrorOf([] { ParseCoco(R"({"images": [], "categories": []})"); }).find("annotations"),
            std::string::npos);
  const std::string e3 = ErrorOf([] { ParseResults(R"([{"image_id": 1, "category_id": 1,
      "bbox": [0, 0, 1, 1], "score": 1.5}])"); });
  EXPECT_NE(e3.find("[0].score"), std::string::npos) << e3;
}

TEST(CocoIoTest, ResultsRoundTripKeepsUnknownFields) {
  const CocoDataset ds = ParseCoco(kMinimal);
  const std::string text = R"([
    {"image_id": 1, "category_id": 3, "bbox": [0.1, 0.2, 10.3, 5.7], "score": 0.25,
     "source": {"model": "x", "layer": 4}, "rank": 2},
    {"image_id": 1, "category_id": 3, "bbox": [1, 2, 3, 4], "score": 0.75,
     "class_probs": {"3": 0.75}}
  ])";
  const auto dets = ParseResults(text, &ds);
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_FALSE(dets[0].extra.empty());
  EXPECT_TRUE(dets[1].extra.empty());
  EXPECT_EQ(dets[1].class_probs->at(3), 0.75);
  EXPECT_EQ(dets[0].box, Box::FromXYWH(0.1, 0.2, 10.3, 5.7));
  const auto again = ParseResults(SerializeResults(dets), &ds);
  EXPECT_EQ(again, dets);
  EXPECT_NE(SerializeResults(again).find("\"source\""), std::string::npos);

  const std::string unknown = R"([{"image_id": 9, "category_id": 3, "bbox": [0, 0, 1, 1],
      "score": 0.5}])";
  EXPECT_NE(ErrorOf([&] { ParseResults(unknown, &ds); }).find("unknown image id 9"),
            std::string::npos);
}

TEST(CocoIoTest, RandomResultsRoundTripExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1000), s(0, 1);
  std::vector<Detection> dets;
  for (int i = 0; i < 2000; ++i) {
    Detection d;
    d.image_id = i % 17;
    d.category_id = i % 5;
    d.score = s(rng);
    const double x = u(rng), y = u(rng);
    d.box = Box(x, y, x + u(rng) * s(rng), y + u(rng));
    dets.push_back(d);
  }
  EXPECT_EQ(ParseResults(SerializeResults(dets)), dets);
}

TEST(CocoIoTest, AtomicWriteLeavesNoTemp) {
  TempDir dir;
  const fs::path target = dir / "out.json";
  WriteFileAtomic(target, "first");
  WriteFileAtomic(target, "second");
  EXPECT_EQ(ReadFile(target), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator{}), 1);
  EXPECT_THROW(WriteFileAtomic(dir / "missing/sub/out.json", "x"), DataError);
  EXPECT_THROW(ReadFile(dir / "nope"), DataError);
}

std::vector<FeatureRecord> RandomRecords(std::mt19937_64& rng, int n) {
  std::vector<FeatureRecord> out;
  std::normal_distribution<float> g(0, 1);
  for (int i = 0; i < n; ++i) {
    FeatureRecord r;
    r.image_id = 100 + i;
    r.pyramid.image_w = 40 + i;
    r.pyramid.image_h = 30;
    for (int s : {4, 8}) {
      const std::int64_t h = (30 + s - 1) / s, w = (r.pyramid.image_w + s - 1) / s;
      Tensor<float> t({3, h, w});
      for (auto& v : t.data()) v = g(rng);
      r.pyramid.levels.push_back({t, s});
    }
    out.push_back(std::move(r));
  }
  return out;
}

void ExpectSameRecords(const std::vector<FeatureRecord>& a, const std::vector<FeatureRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image_id, b[i].image_id);
    EXPECT_EQ(a[i].pyramid.image_w, b[i].pyramid.image_w);
    ASSERT_EQ(a[i].pyramid.levels.size(), b[i].pyramid.levels.size());
    for (std::size_t l = 0; l < a[i].pyramid.levels.size(); ++l) {
      EXPECT_EQ(a[i].pyramid.levels[l].stride, b[i].pyramid.levels[l].stride);
      EXPECT_TRUE(a[i].pyramid.levels[l].data == b[i].pyramid.levels[l].data);
    }
  }
}

TEST(FeatureDumpTest, RoundTripAndLayout) {
  std::mt19937_64 rng(2);
  const auto recs = RandomRecords(rng, 3);
  const std::string bytes = EncodeFeatureDump(recs);
  EXPECT_EQ(bytes.substr(0, 4), "RFBX");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kFeatureDumpVersion);
  ExpectSameRecords(DecodeFeatureDump(bytes), recs);
  EXPECT_EQ(EncodeFeatureDump(DecodeFeatureDump(bytes)), bytes);
  TempDir dir;
  WriteFeatureDump(recs, dir / "f.rfbx");
  ExpectSameRecords(ReadFeatureDump(dir / "f.rfbx"), recs);
  EXPECT_TRUE(DecodeFeatureDump(EncodeFeatureDump({})).empty());
}

TEST(FeatureDumpTest, RejectsCorruption) {
  std::mt19937_64 rng(3);
  const std::string bytes = EncodeFeatureDump(RandomRecords(rng, 2));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_NE(ErrorOf([&] { DecodeFeatureDump(flipped); }).find("checksum"), std::string::npos);

  std::string newer = bytes;
  newer[4] = static_cast<char>(kFeatureDumpVersion + 1);
  const std::string e = ErrorOf([&] { DecodeFeatureDump(newer); });
  EXPECT_NE(e.find("found 2, expected 1"), std::string::npos) << e;

  EXPECT_THROW(DecodeFeatureDump(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(DecodeFeatureDump(bytes + '\0'), DataError);
  EXPECT_THROW(DecodeFeatureDump(""), DataError);
}

TEST(CheckpointTest, RoundTripBitExact) {
  RefinerConfig c;
  c.model_dim = 16;
  c.bottleneck_channels = 8;
  c.num_refiners = 2;
  c.share_weights = false;
  auto p = RefinerParams<float>::Init(c, std::vector<int>{3, 5, 7, 9}, 11);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g(0, 1);
  for (auto& v : p.stages[1].delta.weight.mutable_value().data()) v = g(rng);
  const std::string bytes = EncodeCheckpoint(p);
  const auto q = DecodeCheckpoint(bytes);
  EXPECT_EQ(q.config(), c);
  EXPECT_EQ(q.backbone_channels(), p.backbone_channels());
  const auto a = p.Named(), b = q.Named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(a[i].second.value() == b[i].second.value());
  }
  EXPECT_EQ(EncodeCheckpoint(q), bytes);
  TempDir dir;
  SaveCheckpoint(p, dir / "c.rfck");
  EXPECT_EQ(EncodeCheckpoint(LoadCheckpoint(dir / "c.rfck")), bytes);
}

TEST(CheckpointTest, RejectsCorruption) {
  RefinerConfig c;
  c.model_dim = 8;
  c.bottleneck_channels = 8;
  const std::string bytes =
      EncodeCheckpoint(RefinerParams<float>::Init(c, std::vector<int>{2, 2, 2, 2}, 1));
  std::string flipped = bytes;
  flipped[bytes.size() - 40] ^= 0x01;
  EXPECT_NE(ErrorOf([&] { DecodeCheckpoint(flipped); }).find("checksum"), std::string::npos);
  std::string newer = bytes;
  newer[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_NE(ErrorOf([&] { DecodeCheckpoint(newer); }).find("found 2, expected 1"),
            std::string::npos);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, 20)), DataError);
  EXPECT_THROW(DecodeCheckpoint(bytes + "xx"), DataError);
}

TEST(ConfigTest, ParsesAndOverrides) {
  const ToolConfig c = ParseToolConfig(R"(
    # desk run
    train.epochs = 5
    train.learning_rate = 1e-3   # faster
    refiner.share_weights = false
    seed = 9
    synth.seed = 4
  )");
  EXPECT_EQ(c.train.epochs, 5);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_FALSE(c.refiner.share_weights);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.synth.seed, 4u);
  EXPECT_EQ(c.train.batch_size, 16);  // Untouched default.
  EXPECT_FALSE(ToolConfigKeys().empty());
}

TEST(ConfigTest, Errors) {
  EXPECT_NE(ErrorOf([] { ParseToolConfig("train.epochz = 3"); }).find("unknown key"),
            std::string::npos);
  EXPECT_NE(ErrorOf([] { ParseToolConfig("\n\njust words"); }).find("line 3"), std::string::npos);
  EXPECT_THROW(ParseToolConfig("train.epochs = three"), DataError);
  EXPECT_THROW(ParseToolConfig("train.epochs = 1\ntrain.epochs = 2"), DataError);
  EXPECT_THROW(ParseToolConfig("synth.jitter = 0.7"), DataError);
}

TEST(ReportTest, StableRounded) {
  EvalSummary s;
  s.ap = 0.123456789;
  s.ap50 = 1.0;
  const std::string a = EvalReportJson(s);
  EXPECT_EQ(a, EvalReportJson(s));
  EXPECT_NE(a.find("\"ap\": 0.123457"), std::string::npos) << a;
  EXPECT_NE(a.find("\"ap50\": 1.0"), std::string::npos) << a;
  EXPECT_LT(a.find("\"ap\""), a.find("\"ar1\""));
  EXPECT_EQ(RoundSignificant(2.0 / 3.0), 0.666667);
  EXPECT_NE(EvalReportCsv(s).find("ap,0.123457"), std::string::npos);
}

TEST(SamplesTest, FilesRoundTrip) {
  SynthConfig cfg;
  cfg.train_images = 4;
  cfg.val_images = 0;
  cfg.feature_channels = 2;
  const auto data = GenSynthetic(cfg);
  SampleFiles files = ToSampleFiles(data.train, data.categories);
  const CocoDataset ds = ParseCoco(SerializeCoco(files.dataset));
  const auto dets = ParseResults(SerializeResults(files.predictions), &ds);
  const auto back = AssembleSamples(ds, dets, DecodeFeatureDump(EncodeFeatureDump(files.features)));
  ASSERT_EQ(back.size(), data.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].preds, data.train[i].preds);
    EXPECT_EQ(back[i].gts, data.train[i].gts);
    EXPECT_TRUE(back[i].features.levels[2].data == data.train[i].features.levels[2].data);
  }
  files.features.pop_back();
  EXPECT_THROW(AssembleSamples(ds, dets, files.features), DataError);
}

}  // namespace
}  // namespace refinebox
