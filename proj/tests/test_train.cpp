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

#include "ldrf/error.hpp"
#include "ldrf/train.hpp"
#include "test_util.hpp"

namespace ldrf {
namespace {

using testing::Pattern;
using testing::random_tensor;
using testing::ref_forward;
using testing::RefLayer;
using testing::RefTensor;

// <out, g> as a double-precision functional of the layer stack.
double probe(const std::vector<RefLayer>& layers, const RefTensor& x, const std::vector<double>& g, Pattern* pat) {
  const RefTensor y = ref_forward(layers, x, {}, pat);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * g[i];
  return acc;
}

TEST(Train, TapeGradientsMatchFiniteDifferences) {
  const Network net = testing::small_net(31);
  std::vector<LayerSpec> body(net.layers.begin(), net.layers.begin() + 5);
  std::mt19937_64 rng(32);
  const Tensor4 x = random_tensor(3, 3, 8, 8, rng);
  Tape tape;
  const Tensor4 out = tape.forward(body, x);
  const Tensor4 g = random_tensor(out.n(), out.c(), out.h(), out.w(), rng);
  Tensor4 gin;
  const auto grads = tape.backward(body, g, std::vector<bool>(body.size(), true), &gin);
  const std::vector<double> gd(g.data().begin(), g.data().end());

  auto ref = testing::ref_layers(body);
  Pattern base;
  probe(ref, RefTensor(x), gd, &base);
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t li = 0; li < body.size(); ++li) {
    if (!body[li].is_linear()) continue;
    for (int which = 0; which < 2; ++which) {
      auto& params = which == 0 ? ref[li].w : ref[li].b;
      const auto& analytic = which == 0 ? grads[li].weights : grads[li].bias;
      ASSERT_EQ(analytic.size(), params.size());
      for (std::size_t p = 0; p < params.size(); p += 7) {
        const double keep = params[p];
        Pattern pp, pm;
        params[p] = keep + h;
        const double fp = probe(ref, RefTensor(x), gd, &pp);
        params[p] = keep - h;
        const double fm = probe(ref, RefTensor(x), gd, &pm);
        params[p] = keep;
        if (pp != base || pm != base) continue;
        const double fd = (fp - fm) / (2 * h);
        EXPECT_NEAR(analytic[p], fd, 1e-4 * std::max(1.0, std::fabs(fd))) << body[li].name << " param " << p;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50);
  // Input gradient.
  RefTensor xr(x);
  for (std::size_t i = 0; i < xr.v.size(); i += 11) {
    const double keep = xr.v[i];
    Pattern pp, pm;
    xr.v[i] = keep + h;
    const double fp = probe(ref, xr, gd, &pp);
    xr.v[i] = keep - h;
    const double fm = probe(ref, xr, gd, &pm);
    xr.v[i] = keep;
    if (pp != base || pm != base) continue;
    EXPECT_NEAR(gin.data()[i], (fp - fm) / (2 * h), 1e-4 * std::max(1.0, std::fabs((fp - fm) / (2 * h))));
  }
}

TEST(Train, FrozenLayersGetNoGradient) {
  const Network net = testing::small_net(33);
  std::vector<LayerSpec> body(net.layers.begin(), net.layers.begin() + 5);
  std::mt19937_64 rng(34);
  Tape tape;
  const Tensor4 out = tape.forward(body, random_tensor(2, 3, 8, 8, rng));
  std::vector<bool> trainable(body.size(), false);
  trainable[4] = true;
  const auto grads = tape.backward(body, random_tensor(out.n(), out.c(), out.h(), out.w(), rng), trainable);
  EXPECT_TRUE(grads[0].weights.empty());
  EXPECT_FALSE(grads[4].weights.empty());
}

TEST(Train, SoftmaxCrossEntropyAndGradient) {
  Matrix logits(2, 3, {1.0f, 2.0f, 3.0f, 0.0f, 0.0f, 0.0f});
  const std::vector<std::uint32_t> labels{2, 1};
  Matrix grad;
  const double loss = softmax_cross_entropy(logits, labels, &grad);
  const double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  const double expected = 0.5 * (-(3.0 - std::log(z0)) + std::log(3.0));
  EXPECT_NEAR(loss, expected, 1e-6);
  const double h = 1e-3;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Matrix p = logits, m = logits;
    p.data()[i] += static_cast<float>(h);
    m.data()[i] -= static_cast<float>(h);
    const double fd = (softmax_cross_entropy(p, labels) - softmax_cross_entropy(m, labels)) / (2 * h);
    EXPECT_NEAR(grad.data()[i], fd, 1e-4);
  }
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 3}), Error);
}

TEST(Train, ClassifierLearnsSeparableData) {
  Network net;
  net.input = {2, 1, 1};
  net.layers = {make_dense("fc", 2, 2, false), make_softmax("prob")};
  std::mt19937_64 rng(35);
  testing::randomize(net, rng);
  Tensor4 x(200, 2, 1, 1);
  std::vector<std::uint32_t> y;
  std::normal_distribution<double> nd(0.0, 0.3);
  for (int i = 0; i < 200; ++i) {
    const int c = i % 2;
    x.at(i, 0, 0, 0) = static_cast<float>((c ? 1.0 : -1.0) + nd(rng));
    x.at(i, 1, 0, 0) = static_cast<float>(nd(rng));
    y.push_back(static_cast<std::uint32_t>(c));
  }
  OptimSettings os;
  os.lr = 0.1;
  os.iters = 200;
  const TrainReport r = train_classifier(net, x, y, os);
  EXPECT_LT(r.final_loss, 0.5 * r.init_loss);
}

TEST(Train, BatchSamplerVisitsEachSampleOncePerEpoch) {
  BatchSampler s(12, 4, 36);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(12, 0);
    for (int i = 0; i < 3; ++i)
      for (int v : s.next()) ++seen[v];
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

}  // namespace
}  // namespace ldrf
