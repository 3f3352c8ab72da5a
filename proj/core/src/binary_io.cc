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

#include "refinebox/binary_io.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <zlib.h>

#include "json.hpp"
#include "refinebox/coco_io.hpp"
#include "refinebox/errors.hpp"

namespace refinebox {

using nlohmann::json;

std::uint32_t Crc32(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void Raw(std::string_view s) { out_.append(s); }
  std::size_t size() const { return out_.size(); }
  std::string_view Since(std::size_t begin) const {
    return std::string_view(out_).substr(begin);
  }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint32_t U32() {
    Need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(Byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t U64() {
    Need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(Byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string_view Raw(std::size_t n) {
    Need(n, "bytes");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void Need(std::size_t n, const char* field) const {
    if (n > remaining()) {
      throw DataError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) +
                      " reading " + field);
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::string_view Since(std::size_t begin) const { return bytes_.substr(begin, pos_ - begin); }

 private:
  unsigned char Byte(std::size_t i) const { return static_cast<unsigned char>(bytes_[i]); }

  std::string_view bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

void CheckVersion(const char* what, std::uint32_t found, std::uint32_t expected) {
  if (found != expected) {
    throw DataError(std::string(what) + ": version mismatch (found " + std::to_string(found) +
                    ", expected " + std::to_string(expected) + ")");
  }
}

void CheckCrc(const char* what, const char* part, std::uint32_t stored, std::string_view bytes) {
  if (stored != Crc32(bytes)) throw DataError(std::string(what) + ": checksum mismatch in " + part);
}

std::uint32_t ToU32(std::int64_t v, const char* field) {
  if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument(std::string("feature dump: ") + field + " out of u32 range");
  }
  return static_cast<std::uint32_t>(v);
}

void ReadFloats(std::string_view raw, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
}

constexpr std::uint32_t kMaxLevels = 16;

}  // namespace

std::string EncodeFeatureDump(std::span<const FeatureRecord> records) {
  std::uint32_t level_count = records.empty() ? 0 : records[0].pyramid.levels.size();
  for (const auto& r : records) {
    r.pyramid.Validate();
    if (r.pyramid.levels.size() != level_count) {
      throw std::invalid_argument("feature dump: records disagree on level count");
    }
    if (r.image_id < 0) throw std::invalid_argument("feature dump: negative image id");
  }
  Writer w;
  w.Raw("RFBX");
  w.U32(kFeatureDumpVersion);
  w.U32(level_count);
  w.U64(records.size());
  w.U32(Crc32(w.Since(0)));
  for (const auto& r : records) {
    const std::size_t begin = w.size();
    w.U64(static_cast<std::uint64_t>(r.image_id));
    w.U32(ToU32(r.pyramid.image_w, "image_w"));
    w.U32(ToU32(r.pyramid.image_h, "image_h"));
    for (const auto& level : r.pyramid.levels) {
      const auto& shape = level.data.shape();
      w.U32(ToU32(level.stride, "stride"));
      for (int d = 0; d < 3; ++d) w.U32(ToU32(shape[d], "dimension"));
      for (float v : level.data.data()) w.F32(v);
    }
    w.U32(Crc32(w.Since(begin)));
  }
  return w.Take();
}

std::vector<FeatureRecord> DecodeFeatureDump(std::string_view bytes) {
  constexpr const char* kWhat = "feature dump";
  Reader r(bytes, kWhat);
  if (r.Raw(4) != "RFBX") throw DataError("feature dump: bad magic");
  CheckVersion(kWhat, r.U32(), kFeatureDumpVersion);
  const std::uint32_t level_count = r.U32();
  const std::uint64_t record_count = r.U64();
  const std::string_view header = r.Since(0);
  CheckCrc(kWhat, "header", r.U32(), header);
  if (level_count == 0 && record_count > 0) throw DataError("feature dump: zero levels");
  if (level_count > kMaxLevels) throw DataError("feature dump: implausible level count");
  // Every record carries at least its fixed fields; bound the count first.
  const std::uint64_t min_record = 8 + 4 + 4 + 16ull * level_count + 4;
  if (record_count > r.remaining() / min_record) {
    throw DataError("feature dump: record count exceeds file size");
  }
  std::vector<FeatureRecord> out;
  out.reserve(record_count);
  for (std::uint64_t i = 0; i < record_count; ++i) {
    const std::string where = "record " + std::to_string(i);
    const std::size_t begin = r.pos();
    FeatureRecord rec;
    const std::uint64_t id = r.U64();
    if (id > static_cast<std::uint64_t>(std::numeric_limits<ImageId>::max())) {
      throw DataError("feature dump: " + where + ": image id out of range");
    }
    rec.image_id = static_cast<ImageId>(id);
    const std::uint32_t iw = r.U32(), ih = r.U32();
    if (iw == 0 || ih == 0 || iw > INT32_MAX || ih > INT32_MAX) {
      throw DataError("feature dump: " + where + ": bad image size");
    }
    rec.pyramid.image_w = static_cast<int>(iw);
    rec.pyramid.image_h = static_cast<int>(ih);
    for (std::uint32_t l = 0; l < level_count; ++l) {
      const std::uint32_t stride = r.U32();
      const std::uint64_t c = r.U32(), h = r.U32(), w = r.U32();
      if (stride == 0 || stride > INT32_MAX) {
        throw DataError("feature dump: " + where + ": bad stride");
      }
      // c, h, w < 2^32 so the product of two fits; check against the bytes left.
      const std::uint64_t avail = r.remaining() / 4;
      if (c == 0 || h == 0 || w == 0 || c * h > avail || c * h * w > avail) {
        throw DataError("feature dump: " + where + ": level size exceeds payload");
      }
      const std::size_t n = c * h * w;
      const std::string_view raw = r.Raw(4 * n);
      FeatureLevel<float> level;
      level.stride = static_cast<int>(stride);
      level.data = Tensor<float>({static_cast<std::int64_t>(c), static_cast<std::int64_t>(h),
                                  static_cast<std::int64_t>(w)});
      ReadFloats(raw, level.data.raw(), n);
      rec.pyramid.levels.push_back(std::move(level));
    }
    const std::string_view payload = r.Since(begin);
    CheckCrc(kWhat, where.c_str(), r.U32(), payload);
    try {
      rec.pyramid.Validate();
    } catch (const std::invalid_argument& e) {
      throw DataError("feature dump: " + where + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw DataError("feature dump: trailing bytes after last record");
  return out;
}

void WriteFeatureDump(std::span<const FeatureRecord> records, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeFeatureDump(records));
}

std::vector<FeatureRecord> ReadFeatureDump(const std::filesystem::path& path) {
  return DecodeFeatureDump(ReadFile(path));
}

namespace {

json ConfigJson(const RefinerConfig& c) {
  return {{"model_dim", c.model_dim},
          {"bottleneck_channels", c.bottleneck_channels},
          {"num_blocks", c.num_blocks},
          {"num_refiners", c.num_refiners},
          {"roi_size", c.roi_size},
          {"share_weights", c.share_weights},
          {"top_k", c.top_k},
          {"clamp_eps", c.clamp_eps},
          {"norm_groups", c.norm_groups},
          {"sampling_ratio", c.sampling_ratio}};
}

RefinerConfig ConfigFromJson(const json& j) {
  RefinerConfig c;
  c.model_dim = j.at("model_dim").get<int>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.num_refiners = j.at("num_refiners").get<int>();
  c.roi_size = j.at("roi_size").get<int>();
  c.share_weights = j.at("share_weights").get<bool>();
  c.top_k = j.at("top_k").get<int>();
  c.clamp_eps = j.at("clamp_eps").get<double>();
  c.norm_groups = j.at("norm_groups").get<int>();
  c.sampling_ratio = j.at("sampling_ratio").get<int>();
  c.Validate();
  return c;
}

}  // namespace

std::string EncodeCheckpoint(const RefinerParams<float>& params) {
  const auto named = params.Named();
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, var] : named) {
    manifest.push_back({{"name", name}, {"shape", var.shape()}, {"offset", offset}});
    offset += var.value().numel();
  }
  json header = {{"config", ConfigJson(params.config())},
                 {"backbone_channels", params.backbone_channels()},
                 {"tensors", std::move(manifest)},
                 {"payload_floats", offset}};
  const std::string header_text = header.dump();
  Writer w;
  w.Raw("RFCK");
  w.U32(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(header_text.size()));
  w.Raw(header_text);
  for (const auto& [name, var] : named) {
    for (float v : var.value().data()) w.F32(v);
  }
  w.U32(Crc32(w.Since(0)));
  return w.Take();
}

RefinerParams<float> DecodeCheckpoint(std::string_view bytes) {
  constexpr const char* kWhat = "checkpoint";
  Reader r(bytes, kWhat);
  if (r.Raw(4) != "RFCK") throw DataError("checkpoint: bad magic");
  CheckVersion(kWhat, r.U32(), kCheckpointVersion);
  const std::uint32_t header_len = r.U32();
  if (bytes.size() < 16 || header_len > bytes.size() - 16) {
    throw DataError("checkpoint: header length exceeds file size");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4), kWhat);
  CheckCrc(kWhat, "file", tail.U32(), body);

  const std::string_view header_text = r.Raw(header_len);
  json header;
  RefinerConfig config;
  std::vector<int> channels;
  std::uint64_t payload_floats = 0;
  try {
    header = json::parse(header_text.begin(), header_text.end());
    config = ConfigFromJson(header.at("config"));
    channels = header.at("backbone_channels").get<std::vector<int>>();
    payload_floats = header.at("payload_floats").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (payload_floats != (r.remaining() - 4) / 4 || (r.remaining() - 4) % 4 != 0) {
    throw DataError("checkpoint: payload size does not match the header");
  }
  const std::string_view payload = r.Raw(4 * payload_floats);

  RefinerParams<float> params;
  try {
    params = RefinerParams<float>::Zeros(config, channels);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  auto named = params.Named();
  const json& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != named.size()) {
    throw DataError("checkpoint: manifest does not match the configured network");
  }
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, var] = named[i];
    const json& entry = tensors[i];
    std::string entry_name;
    Shape entry_shape;
    std::uint64_t offset = 0;
    try {
      entry_name = entry.at("name").get<std::string>();
      entry_shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw DataError("checkpoint: manifest entry " + std::to_string(i) + ": " + e.what());
    }
    if (entry_name != name || entry_shape != var.shape()) {
      throw DataError("checkpoint: manifest entry " + std::to_string(i) + " (" + entry_name +
                      ") does not match " + name);
    }
    const std::uint64_t n = var.value().numel();
    // Tensors are packed in manifest order, so offsets are contiguous.
    if (offset != expected_offset || offset + n > payload_floats) {
      throw DataError("checkpoint: tensor " + name + " has an overlapping or out-of-bounds offset");
    }
    ReadFloats(payload.substr(4 * offset, 4 * n), var.mutable_value().raw(), n);
    expected_offset += n;
  }
  if (expected_offset != payload_floats) throw DataError("checkpoint: unused payload bytes");
  for (const auto& [name, var] : named) {
    if (!var.value().AllFinite()) throw DataError("checkpoint: non-finite values in " + name);
  }
  return params;
}

void SaveCheckpoint(const RefinerParams<float>& params, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeCheckpoint(params));
}

RefinerParams<float> LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(ReadFile(path));
}

}  // namespace refinebox
