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

#ifndef REFINEBOX_BINARY_IO_HPP_
#define REFINEBOX_BINARY_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refinebox/detection.hpp"
#include "refinebox/refine_net.hpp"

namespace refinebox {

// Feature dump, little-endian throughout:
//   "RFBX" u32 version u32 level_count u64 record_count u32 crc32(previous 20 bytes)
//   per record: u64 image_id u32 image_w u32 image_h
//               per level: u32 stride u32 C u32 H u32 W, C*H*W f32 (CHW)
//               u32 crc32(record bytes above)
inline constexpr std::uint32_t kFeatureDumpVersion = 1;

struct FeatureRecord {
  ImageId image_id = 0;
  FeaturePyramid pyramid;
};

std::string EncodeFeatureDump(std::span<const FeatureRecord> records);
// Throws DataError on any truncation, trailing bytes, checksum or version
// mismatch; declared sizes are checked before anything is allocated.
std::vector<FeatureRecord> DecodeFeatureDump(std::string_view bytes);

void WriteFeatureDump(std::span<const FeatureRecord> records,
                      const std::filesystem::path& path);
std::vector<FeatureRecord> ReadFeatureDump(const std::filesystem::path& path);

// Checkpoint:
//   "RFCK" u32 version u32 header_len, header_len bytes of JSON (config,
//   backbone channels, manifest of name/shape/offset in floats), the f32
//   payload, u32 crc32(everything before it).
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string EncodeCheckpoint(const RefinerParams<float>& params);
RefinerParams<float> DecodeCheckpoint(std::string_view bytes);

void SaveCheckpoint(const RefinerParams<float>& params, const std::filesystem::path& path);
RefinerParams<float> LoadCheckpoint(const std::filesystem::path& path);

std::uint32_t Crc32(std::string_view bytes);

}  // namespace refinebox

#endif  // REFINEBOX_BINARY_IO_HPP_
