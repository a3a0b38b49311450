// Copyright 2026 The TaDiCodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Single-file checkpoint container.
//
// Layout (all integers little-endian):
//   8 bytes   magic "TDCKPT\0\1"
//   u32       format version
//   u32 + n   config, UTF-8 JSON
//   u64       step counter
//   u32 + n   rng state string
//   u32       array count
//   per array: u32 name length, name, u32 dtype (2 = float64), u32 rows,
//              u32 cols, u64 byte offset into the data block, u64 FNV-1a
//              checksum of the raw bytes
//   data block: raw little-endian arrays

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tadicodec/autograd.hpp"

namespace tdc::ckpt {

inline constexpr uint32_t kFormatVersion = 1;

struct CheckpointData {
    uint32_t version = kFormatVersion;
    std::string config_json;
    uint64_t step = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, ag::Matrix>> arrays;

    const ag::Matrix* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
/// Throws CheckpointError on bad magic, version mismatch, truncation or a
/// checksum failure; the message names the offending array.
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace tdc::ckpt
