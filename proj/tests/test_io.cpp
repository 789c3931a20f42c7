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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "ldrf/error.hpp"
#include "ldrf/io.hpp"
#include "test_util.hpp"

namespace ldrf {
namespace {

TEST(Io, ModelRoundTripIsBitExact) {
  Network net = testing::small_net(21);
  net.masks["c2"] = Mask{1, 0, 1, 1, 0, 1, 1, 1};
  net.info["note"] = "x";
  const auto bytes = encode_model(net);
  const Network back = decode_model(bytes);
  EXPECT_EQ(encode_model(back), bytes);
  ASSERT_EQ(back.layers.size(), net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].weights, net.layers[i].weights);
    EXPECT_EQ(back.layers[i].bias, net.layers[i].bias);
    EXPECT_EQ(back.layers[i].kind, net.layers[i].kind);
  }
  EXPECT_EQ(back.masks, net.masks);
  EXPECT_EQ(back.info, net.info);
}

TEST(Io, TruncatedModelReportsOffset) {
  const auto bytes = encode_model(testing::small_net(22));
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    try {
      decode_model(part);
      FAIL() << "accepted truncated file of " << cut << " bytes";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
}

TEST(Io, BadMagicAndVersionRejected) {
  auto bytes = encode_model(testing::small_net(23));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_model(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_model(bad), FormatError);
}

TEST(Io, DatasetRoundTrip) {
  const Dataset d = testing::random_dataset(7, {2, 3, 4}, 3, 24);
  const Dataset back = decode_dataset(encode_dataset(d));
  EXPECT_EQ(back.images.data(), d.images.data());
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.num_classes, 3u);
  auto bytes = encode_dataset(d);
  bytes.resize(bytes.size() - 2);
  EXPECT_THROW(decode_dataset(bytes), FormatError);
}

TEST(Io, DatasetLabelOutOfRangeRejected) {
  Dataset d = testing::random_dataset(4, {1, 2, 2}, 2, 25);
  d.labels[1] = 5;
  EXPECT_THROW(decode_dataset(encode_dataset(d)), Error);
}

TEST(Io, FileRoundTripAndMissingFile) {
  const auto path = (std::filesystem::temp_directory_path() / ("ldrf_io_test_" + std::to_string(::getpid()) + ".ldrf")).string();
  const Network net = testing::small_net(26);
  save_model(net, path);
  EXPECT_EQ(encode_model(load_model(path)), encode_model(net));
  std::remove(path.c_str());
  EXPECT_THROW(load_model(path), Error);
}

}  // namespace
}  // namespace ldrf
