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

#include "refinebox/coco_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "json.hpp"

#include "refinebox/errors.hpp"

namespace refinebox {

using nlohmann::json;

ImageSizes CocoDataset::Sizes() const {
  ImageSizes sizes;
  for (const auto& im : images) {
    sizes[im.id] = {static_cast<double>(im.width), static_cast<double>(im.height)};
  }
  return sizes;
}

std::vector<CategoryId> CocoDataset::CategoryIds() const {
  std::vector<CategoryId> ids;
  for (const auto& c : categories) ids.push_back(c.id);
  return ids;
}

namespace {

[[noreturn]] void Fail(const std::string& path, const std::string& what) {
  throw DataError(path + ": " + what);
}

std::string Child(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string Index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

json Parse(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DataError(std::string("<root>: malformed JSON: ") + e.what());
  }
}

const json& Member(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) Fail(path, std::string("missing member \"") + key + "\"");
  return *it;
}

std::int64_t AsInt(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) Fail(path, "integer out of range");
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  Fail(path, "expected an integer");
}

double AsDouble(const json& v, const std::string& path) {
  if (!v.is_number()) Fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) Fail(path, "non-finite number");
  return d;
}

Box ParseBbox(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 4) Fail(path, "expected [x, y, w, h]");
  double f[4];
  for (std::size_t i = 0; i < 4; ++i) f[i] = AsDouble(v[i], Index(path, i));
  if (f[2] < 0.0) Fail(Index(path, 2), "negative extent");
  if (f[3] < 0.0) Fail(Index(path, 3), "negative extent");
  try {
    return Box::FromXYWH(f[0], f[1], f[2], f[3]);
  } catch (const std::invalid_argument& e) {
    Fail(path, e.what());
  }
}

// Width whose sum with `lo` rounds back to `hi` exactly, if one is nearby.
double ExactExtent(double lo, double hi) {
  double w = hi - lo;
  if (lo + w == hi) return w;
  double up = w, down = w;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, INFINITY);
    if (lo + up == hi) return up;
    down = std::nextafter(down, 0.0);
    if (down >= 0.0 && lo + down == hi) return down;
  }
  return w;
}

json BboxJson(const Box& b) {
  return json::array({b.x1(), b.y1(), ExactExtent(b.x1(), b.x2()), ExactExtent(b.y1(), b.y2())});
}

CocoDataset FromJson(const json& root) {
  if (!root.is_object()) Fail("<root>", "expected an object");
  CocoDataset ds;
  std::set<ImageId> image_ids;
  std::set<CategoryId> category_ids;

  const json& images = Member(root, "", "images");
  if (!images.is_array()) Fail("images", "expected an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string p = Index("images", i);
    const json& im = images[i];
    if (!im.is_object()) Fail(p, "expected an object");
    CocoImage out;
    out.id = AsInt(Member(im, p, "id"), Child(p, "id"));
    const std::int64_t w = AsInt(Member(im, p, "width"), Child(p, "width"));
    const std::int64_t h = AsInt(Member(im, p, "height"), Child(p, "height"));
    if (w <= 0 || w > INT32_MAX) Fail(Child(p, "width"), "must be a positive 32-bit integer");
    if (h <= 0 || h > INT32_MAX) Fail(Child(p, "height"), "must be a positive 32-bit integer");
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    if (auto it = im.find("file_name"); it != im.end()) {
      if (!it->is_string()) Fail(Child(p, "file_name"), "expected a string");
      out.file_name = it->get<std::string>();
    }
    if (!image_ids.insert(out.id).second) {
      Fail(Child(p, "id"), "duplicate image id " + std::to_string(out.id));
    }
    ds.images.push_back(std::move(out));
  }

  const json& cats = Member(root, "", "categories");
  if (!cats.is_array()) Fail("categories", "expected an array");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string p = Index("categories", i);
    const json& c = cats[i];
    if (!c.is_object()) Fail(p, "expected an object");
    CocoCategory out;
    out.id = AsInt(Member(c, p, "id"), Child(p, "id"));
    if (auto it = c.find("name"); it != c.end()) {
      if (!it->is_string()) Fail(Child(p, "name"), "expected a string");
      out.name = it->get<std::string>();
    }
    if (!category_ids.insert(out.id).second) {
      Fail(Child(p, "id"), "duplicate category id " + std::to_string(out.id));
    }
    ds.categories.push_back(std::move(out));
  }

  const json& anns = Member(root, "", "annotations");
  if (!anns.is_array()) Fail("annotations", "expected an array");
  std::set<std::int64_t> ann_ids;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string p = Index("annotations", i);
    const json& a = anns[i];
    if (!a.is_object()) Fail(p, "expected an object");
    GtInstance g;
    g.id = AsInt(Member(a, p, "id"), Child(p, "id"));
    g.image_id = AsInt(Member(a, p, "image_id"), Child(p, "image_id"));
    g.category_id = AsInt(Member(a, p, "category_id"), Child(p, "category_id"));
    g.box = ParseBbox(Member(a, p, "bbox"), Child(p, "bbox"));
    if (auto it = a.find("area"); it != a.end()) {
      g.area = AsDouble(*it, Child(p, "area"));
      if (g.area < 0.0) Fail(Child(p, "area"), "negative area");
    } else {
      g.area = g.box.area();
    }
    if (auto it = a.find("iscrowd"); it != a.end()) {
      const std::int64_t crowd = AsInt(*it, Child(p, "iscrowd"));
      if (crowd != 0 && crowd != 1) Fail(Child(p, "iscrowd"), "expected 0 or 1");
      g.iscrowd = crowd == 1;
    }
    if (!image_ids.contains(g.image_id)) {
      Fail(Child(p, "image_id"), "unknown image id " + std::to_string(g.image_id));
    }
    if (!category_ids.contains(g.category_id)) {
      Fail(Child(p, "category_id"), "unknown category id " + std::to_string(g.category_id));
    }
    if (!ann_ids.insert(g.id).second) {
      Fail(Child(p, "id"), "duplicate annotation id " + std::to_string(g.id));
    }
    ds.annotations.push_back(g);
  }
  return ds;
}

}  // namespace

CocoDataset ParseCoco(std::string_view text) { return FromJson(Parse(text)); }

CocoDataset LoadCoco(const std::filesystem::path& path) { return ParseCoco(ReadFile(path)); }

std::string SerializeCoco(const CocoDataset& ds) {
  json root = json::object();
  json images = json::array();
  for (const auto& im : ds.images) {
    images.push_back({{"id", im.id}, {"width", im.width}, {"height", im.height},
                      {"file_name", im.file_name}});
  }
  json anns = json::array();
  for (const auto& g : ds.annotations) {
    anns.push_back({{"id", g.id},
                    {"image_id", g.image_id},
                    {"category_id", g.category_id},
                    {"bbox", BboxJson(g.box)},
                    {"area", g.area},
                    {"iscrowd", g.iscrowd ? 1 : 0}});
  }
  json cats = json::array();
  for (const auto& c : ds.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  root["images"] = std::move(images);
  root["annotations"] = std::move(anns);
  root["categories"] = std::move(cats);
  return root.dump(1) + "\n";
}

void SaveCoco(const CocoDataset& dataset, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeCoco(dataset));
}

std::vector<Detection> ParseResults(std::string_view text, const CocoDataset* dataset) {
  const json root = Parse(text);
  if (!root.is_array()) Fail("<root>", "expected an array of detections");
  std::set<ImageId> image_ids;
  std::set<CategoryId> category_ids;
  if (dataset != nullptr) {
    for (const auto& im : dataset->images) image_ids.insert(im.id);
    for (const auto& c : dataset->categories) category_ids.insert(c.id);
  }
  static const std::set<std::string> kKnown = {"image_id", "category_id", "bbox", "score",
                                               "class_probs"};
  std::vector<Detection> out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string p = Index("", i);
    const json& r = root[i];
    if (!r.is_object()) Fail(p, "expected an object");
    Detection d;
    d.image_id = AsInt(Member(r, p, "image_id"), Child(p, "image_id"));
    d.category_id = AsInt(Member(r, p, "category_id"), Child(p, "category_id"));
    d.box = ParseBbox(Member(r, p, "bbox"), Child(p, "bbox"));
    d.score = AsDouble(Member(r, p, "score"), Child(p, "score"));
    if (d.score < 0.0 || d.score > 1.0) Fail(Child(p, "score"), "score outside [0, 1]");
    if (auto it = r.find("class_probs"); it != r.end()) {
      const std::string cp = Child(p, "class_probs");
      if (!it->is_object()) Fail(cp, "expected an object keyed by category id");
      std::map<CategoryId, double> probs;
      for (const auto& [key, value] : it->items()) {
        const std::string kp = Child(cp, key);
        CategoryId id = 0;
        std::size_t used = 0;
        try {
          id = std::stoll(key, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != key.size() || key.empty()) Fail(kp, "key is not an integer category id");
        const double prob = AsDouble(value, kp);
        if (prob < 0.0 || prob > 1.0) Fail(kp, "probability outside [0, 1]");
        if (dataset != nullptr && !category_ids.contains(id)) {
          Fail(kp, "unknown category id " + std::to_string(id));
        }
        probs[id] = prob;
      }
      d.class_probs = std::move(probs);
    }
    json extra = json::object();
    for (const auto& [key, value] : r.items()) {
      if (!kKnown.contains(key)) extra[key] = value;
    }
    if (!extra.empty()) d.extra = extra.dump();
    if (dataset != nullptr) {
      if (!image_ids.contains(d.image_id)) {
        Fail(Child(p, "image_id"), "unknown image id " + std::to_string(d.image_id));
      }
      if (!category_ids.contains(d.category_id)) {
        Fail(Child(p, "category_id"), "unknown category id " + std::to_string(d.category_id));
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> LoadResults(const std::filesystem::path& path, const CocoDataset* dataset) {
  return ParseResults(ReadFile(path), dataset);
}

std::string SerializeResults(std::span<const Detection> detections) {
  json root = json::array();
  for (const auto& d : detections) {
    json r = d.extra.empty() ? json::object() : json::parse(d.extra);
    r["image_id"] = d.image_id;
    r["category_id"] = d.category_id;
    r["bbox"] = BboxJson(d.box);
    r["score"] = d.score;
    if (d.class_probs) {
      json probs = json::object();
      for (const auto& [id, p] : *d.class_probs) probs[std::to_string(id)] = p;
      r["class_probs"] = std::move(probs);
    }
    root.push_back(std::move(r));
  }
  return root.dump() + "\n";
}

void SaveResults(std::span<const Detection> detections, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeResults(detections));
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("read failed: " + path.string());
  return std::move(buf).str();
}

void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw DataError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace refinebox
