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

#include <random>

#include "ldrf/decompose.hpp"
#include "ldrf/error.hpp"
#include "ldrf/pruner.hpp"
#include "ldrf/recompose.hpp"
#include "ldrf/reconstruct.hpp"
#include "test_util.hpp"

namespace ldrf {
namespace {

TEST(Recompose, LayerIsProductOfFactors) {
  std::mt19937_64 rng(71);
  LayerSpec conv = make_conv("c", 3, 5, 3, 1, 1, true);
  testing::randomize(conv, rng);
  DecomposedLayer d = decompose_layer(conv, 0.6);
  for (float& v : d.q_bias) v = 0.3f;
  const SlimLayer s = recompose_layer(d.embed_layer(), d.transform_layer());
  const Matrix w = matmul(d.q, d.r);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(s.layer.weights[i], w.data()[i], 1e-6);
  for (int j = 0; j < 5; ++j) {
    double b = d.r_bias[j];
    for (int t = 0; t < d.z; ++t) b += 0.3 * d.r(t, j);
    EXPECT_NEAR(s.layer.bias[j], b, 1e-6);
  }
  EXPECT_TRUE(s.layer.relu);
  EXPECT_EQ(s.source, "c");
}

TEST(Recompose, DenseFactorsRecomposeToDense) {
  std::mt19937_64 rng(72);
  LayerSpec fc = make_dense("fc", 12, 4, false);
  testing::randomize(fc, rng);
  const DecomposedLayer d = decompose_layer(fc, 1.0);
  const SlimLayer s = recompose_layer(d.embed_layer(), d.transform_layer());
  EXPECT_EQ(s.layer.kind, LayerKind::kDense);
  for (std::size_t i = 0; i < fc.weights.size(); ++i) EXPECT_NEAR(s.layer.weights[i], fc.weights[i], 1e-5);
}

class Chain : public ::testing::Test {
 protected:
  void SetUp() override {
    const Network plain = testing::small_net(73);
    data = testing::random_dataset(64, plain.input, 3, 74);
    const Network dec = decompose_network(plain, 0.7, data).net;
    PruneConfig cfg;
    cfg.energy = 0.7;
    cfg.optim.iters = 20;
    for (const auto& [e, t] : decomposed_pairs(dec)) {
      const std::string base = dec.layers[t].name.substr(0, dec.layers[t].name.size() - 2);
      if (base == "fc") continue;
      cfg.layers.push_back({base, std::min(dec.layers[t].out, dec.layers[e].out + 1)});
    }
    pruned = ldrf_prune_network(dec, cfg, data).net;
  }
  Dataset data;
  Network pruned;
};

TEST_F(Chain, SlimNetworkMatchesMaskedPipeline) {
  const Network slim = strip_pruned(pruned);
  EXPECT_EQ(slim.form, NetForm::kSlim);
  EXPECT_EQ(slim.layers[0].out, popcount(pruned.masks.at("c1")));
  EXPECT_EQ(slim.layers[2].in, popcount(pruned.masks.at("c1")));
  EXPECT_EQ(slim.layers[4].in, popcount(pruned.masks.at("c2")) * 4);
  const Equivalence eq = verify_equivalence(pruned, slim, data.images, 1e-5);
  EXPECT_TRUE(eq.pass) << eq.max_abs_dev;
  const Network plain = recompose_network(pruned);
  EXPECT_EQ(plain.form, NetForm::kPlain);
  EXPECT_EQ(plain.masks, pruned.masks);
  EXPECT_TRUE(verify_equivalence(pruned, plain, data.images, 1e-5).pass);
}

TEST_F(Chain, AllZeroMaskIsRejected) {
  Network bad = pruned;
  std::fill(bad.masks.at("c1").begin(), bad.masks.at("c1").end(), 0);
  EXPECT_THROW(strip_pruned(bad), Error);
}

TEST(Recompose, EquivalenceReportsDeviation) {
  const Network a = testing::small_net(75);
  Network b = a;
  b.layers[4].bias[0] += 0.5f;
  std::mt19937_64 rng(76);
  const Equivalence eq = verify_equivalence(a, b, testing::random_tensor(5, 3, 8, 8, rng), 1e-5);
  EXPECT_FALSE(eq.pass);
  EXPECT_NEAR(eq.max_abs_dev, 0.5, 1e-5);
}

}  // namespace
}  // namespace ldrf
