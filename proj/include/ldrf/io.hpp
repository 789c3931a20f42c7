// Copyright 2026 The LDRF Authors
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

#include <cstdint>
#include <string>
#include <vector>

#include "ldrf/network.hpp"
#include "ldrf/tensor.hpp"

namespace ldrf {

// Model file, little-endian:
//   "LDRF" | u32 version=1 | u64 manifest length | UTF-8 JSON manifest | f32 blob
// The manifest lists every layer with its geometry and the byte offset/count
// of each of its tensors inside the blob, in manifest order.
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<std::uint8_t> encode_model(const Network& net);
Network decode_model(const std::vector<std::uint8_t>& bytes);
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

// Dataset file, little-endian:
//   "LDDS" | u32 version=1 | u32 n,c,h,w | u32 num_classes | f32 data | u32 labels
inline constexpr std::uint32_t kDatasetVersion = 1;

struct Dataset {
  Tensor4 images;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  int size() const { return images.n(); }
  Dataset subset(int begin, int count) const;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);

}  // namespace ldrf
