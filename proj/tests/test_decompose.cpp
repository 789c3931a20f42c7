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

#include <cmath>
#include <random>

#include "ldrf/decompose.hpp"
#include "ldrf/error.hpp"
#include "ldrf/recompose.hpp"
#include "test_util.hpp"

namespace ldrf {
namespace {

using testing::random_tensor;

double rel_frobenius(const std::vector<float>& a, const std::vector<float>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    den += static_cast<double>(b[i]) * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-30));
}

TEST(Decompose, CumulativeEnergyAndRank) {
  const std::vector<double> s{4, 3, 2, 1};
  const auto c = cumulative_energy(s);
  EXPECT_NEAR(c[0], 0.4, 1e-12);
  EXPECT_NEAR(c[1], 0.7, 1e-12);
  EXPECT_NEAR(c[2], 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(c[3], 1.0);
  EXPECT_EQ(estimate_rank(s, 0.3), 1);
  EXPECT_EQ(estimate_rank(s, 0.65), 2);
  EXPECT_EQ(estimate_rank(s, 0.71), 3);
  EXPECT_EQ(estimate_rank(s, 1.0), 4);
  EXPECT_THROW(estimate_rank(s, 0.0), Error);
  EXPECT_THROW(estimate_rank(s, 1.5), Error);
  try {
    estimate_rank({0.0, 0.0}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateLayer);
  }
}

// Property: z is non-decreasing in e and bounded by min(rows, cols).
TEST(Decompose, RankIsMonotoneInEnergy) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = testing::random_matrix(9 + trial, 5 + trial % 7, rng);
    const auto s = svd(w).s;
    int prev = 0;
    for (double e = 0.05; e <= 1.0 + 1e-9; e += 0.05) {
      const int z = estimate_rank(s, std::min(e, 1.0));
      EXPECT_GE(z, prev);
      EXPECT_GE(z, 1);
      EXPECT_LE(z, static_cast<int>(s.size()));
      prev = z;
    }
  }
}

TEST(Decompose, FullEnergyReproducesWeights) {
  std::mt19937_64 rng(42);
  LayerSpec conv = make_conv("c", 4, 6, 3, 1, 1, true);
  testing::randomize(conv, rng);
  const DecomposedLayer d = decompose_layer(conv, 1.0);
  EXPECT_EQ(d.z, 6);
  const SlimLayer s = recompose_layer(d.embed_layer(), d.transform_layer());
  EXPECT_LT(rel_frobenius(s.layer.weights, conv.weights), 1e-5);
  EXPECT_EQ(s.layer.kind, LayerKind::kConv2D);
  EXPECT_EQ(s.layer.name, "c");
}

TEST(Decompose, FactorShapesFollowRank) {
  std::mt19937_64 rng(43);
  LayerSpec conv = make_conv("c", 8, 16, 3, 1, 1, true);
  testing::randomize(conv, rng);
  const DecomposedLayer d = decompose_layer(conv, 0.5);
  EXPECT_EQ(d.q.rows(), 72u);
  EXPECT_EQ(d.q.cols(), static_cast<std::size_t>(d.z));
  EXPECT_EQ(d.r.rows(), static_cast<std::size_t>(d.z));
  EXPECT_EQ(d.r.cols(), 16u);
  const LayerSpec e = d.embed_layer(), t = d.transform_layer();
  EXPECT_EQ(e.kind, LayerKind::kEmbedConv);
  EXPECT_EQ(e.k, 3);
  EXPECT_FALSE(e.relu);
  EXPECT_EQ(t.kind, LayerKind::kPointwiseConv);
  EXPECT_EQ(t.k, 1);
  EXPECT_TRUE(t.relu);
  const DecomposedLayer back = DecomposedLayer::from_layers(e, t);
  EXPECT_EQ(back.q.data(), d.q.data());
  EXPECT_EQ(back.r.data(), d.r.data());
}

TEST(Decompose, NormalizationFoldingMomentsAndInvariance) {
  std::mt19937_64 rng(44);
  LayerSpec conv = make_conv("c", 3, 8, 3, 1, 1, true);
  testing::randomize(conv, rng);
  const DecomposedLayer d = decompose_layer(conv, 0.7);
  Tensor4 x = random_tensor(16, 3, 6, 6, rng);
  for (float& v : x.data()) v = v * 2.0f + 0.7f;  // shift so raw moments are far from (0, 1)
  const Tensor4 emb = apply_layer(d.embed_layer(), x);
  const std::size_t plane = static_cast<std::size_t>(emb.h()) * emb.w();
  std::vector<double> mean(d.z, 0.0), var(d.z, 0.0);
  const double count = static_cast<double>(emb.n()) * plane;
  for (int b = 0; b < emb.n(); ++b)
    for (int c = 0; c < d.z; ++c)
      for (std::size_t p = 0; p < plane; ++p) mean[c] += emb.data()[(b * d.z + c) * plane + p] / count;
  for (int b = 0; b < emb.n(); ++b)
    for (int c = 0; c < d.z; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = emb.data()[(b * d.z + c) * plane + p] - mean[c];
        var[c] += v * v / count;
      }
  const DecomposedLayer f = fold_normalization(d, mean, var);
  const Tensor4 emb2 = apply_layer(f.embed_layer(), x);
  for (int c = 0; c < d.z; ++c) {
    double m = 0.0, v = 0.0;
    for (int b = 0; b < emb2.n(); ++b)
      for (std::size_t p = 0; p < plane; ++p) m += emb2.data()[(b * d.z + c) * plane + p] / count;
    for (int b = 0; b < emb2.n(); ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        const double t = emb2.data()[(b * d.z + c) * plane + p] - m;
        v += t * t / count;
      }
    EXPECT_LE(std::fabs(m), 0.05);
    EXPECT_GE(v, 0.8);
    EXPECT_LE(v, 1.2);
  }
  const Tensor4 y1 = apply_layer(d.transform_layer(), emb);
  const Tensor4 y2 = apply_layer(f.transform_layer(), emb2);
  for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_NEAR(y1.data()[i], y2.data()[i], 1e-5 * (1.0 + std::fabs(y1.data()[i])));
  EXPECT_THROW(fold_normalization(d, {1.0}, {1.0}), Error);
}

TEST(Decompose, NetworkAtFullEnergyIsOutputEquivalent) {
  const Network net = testing::small_net(45);
  const Dataset data = testing::random_dataset(64, net.input, 3, 46);
  const DecomposeResult r = decompose_network(net, 1.0, data);
  EXPECT_EQ(r.net.form, NetForm::kDecomposed);
  EXPECT_EQ(decomposed_pairs(r.net).size(), 3u);
  ASSERT_EQ(r.report.layers.size(), 3u);
  const Matrix a = forward(net, data.images).logits, b = forward(r.net, data.images).logits;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-4);
  EXPECT_THROW(decompose_network(r.net, 1.0, data), Error);
}

TEST(Decompose, RankReportJsonRoundTrip) {
  const Network net = testing::small_net(47);
  const RankReport r = analyze_network(net, 0.6);
  const RankReport back = RankReport::from_json(r.to_json());
  ASSERT_EQ(back.layers.size(), r.layers.size());
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].name, r.layers[i].name);
    EXPECT_EQ(back.layers[i].z, r.layers[i].z);
    EXPECT_EQ(back.layers[i].n, r.layers[i].n);
  }
  EXPECT_EQ(r.at("c2").n, 8);
  EXPECT_THROW(r.at("nope"), Error);
}

TEST(Decompose, ZeroLayerIsDegenerate) {
  LayerSpec conv = make_conv("dead", 2, 3, 1, 0, 1, false);
  try {
    decompose_layer(conv, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateLayer);
  }
}

}  // namespace
}  // namespace ldrf
