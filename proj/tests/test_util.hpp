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

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ldrf/io.hpp"
#include "ldrf/linalg.hpp"
#include "ldrf/network.hpp"
#include "ldrf/tensor.hpp"

namespace ldrf::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = static_cast<float>(nd(rng));
  return m;
}

inline Tensor4 random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor4 t(n, c, h, w);
  for (float& v : t.data()) v = static_cast<float>(nd(rng));
  return t;
}

inline void randomize(LayerSpec& l, std::mt19937_64& rng, double scale = -1.0) {
  if (!l.is_linear()) return;
  const double s = scale > 0.0 ? scale : std::sqrt(2.0 / static_cast<double>(l.fan_in()));
  std::normal_distribution<double> nd(0.0, s);
  for (float& v : l.weights) v = static_cast<float>(nd(rng));
  std::normal_distribution<double> nb(0.0, 0.05);
  l.bias.assign(l.out, 0.0f);
  for (float& v : l.bias) v = static_cast<float>(nb(rng));
}

inline void randomize(Network& net, std::mt19937_64& rng) {
  for (auto& l : net.layers) randomize(l, rng);
}

// conv 3->6 k3 p1 relu, pool 2, conv 6->8 k3 p1 relu, pool 2, dense 32->3.
inline Network small_net(std::uint64_t seed) {
  Network net;
  net.name = "small";
  net.input = {3, 8, 8};
  net.layers = {make_conv("c1", 3, 6, 3, 1, 1, true), make_maxpool("p1", 2, 2), make_conv("c2", 6, 8, 3, 1, 1, true),
                make_maxpool("p2", 2, 2), make_dense("fc", 8 * 2 * 2, 3, false), make_softmax("prob")};
  std::mt19937_64 rng(seed);
  randomize(net, rng);
  return net;
}

inline Dataset random_dataset(int n, Shape s, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.images = random_tensor(n, s.c, s.h, s.w, rng);
  d.num_classes = static_cast<std::uint32_t>(classes);
  for (int i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint32_t>(i % classes));
  return d;
}

// Double-precision reference forward pass, written with plain loops and no
// shared code with the engine.
struct RefTensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  RefTensor() = default;
  RefTensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_) {}
  explicit RefTensor(const Tensor4& t) : n(t.n()), c(t.c()), h(t.h()), w(t.w()), v(t.data().begin(), t.data().end()) {}
  double& at(int b, int ch, int y, int x) { return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x]; }
  double at(int b, int ch, int y, int x) const { return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x]; }
};

struct RefLayer {
  LayerSpec synth;
  std::vector<double> w;
  std::vector<double> b;

  explicit RefLayer(const LayerSpec& l) : synth(l), w(l.weights.begin(), l.weights.end()), b(l.bias.begin(), l.bias.end()) {}
};

// Every ReLU sign and pooling argmax taken, so callers can spot kinks.
using Pattern = std::vector<int>;

inline RefTensor ref_apply(const RefLayer& rl, const RefTensor& x, Pattern* pat) {
  const LayerSpec& l = rl.synth;
  const auto relu = [&](double a) {
    if (pat) pat->push_back(a > 0.0);
    return a > 0.0 ? a : 0.0;
  };
  switch (l.kind) {
    case LayerKind::kConv2D:
    case LayerKind::kDense:
    case LayerKind::kEmbedConv:
    case LayerKind::kPointwiseConv: {
      if (l.is_dense_style()) {
        RefTensor y(x.n, l.out, 1, 1);
        const int feat = x.c * x.h * x.w;
        for (int b = 0; b < x.n; ++b)
          for (int j = 0; j < l.out; ++j) {
            double a = rl.b.empty() ? 0.0 : rl.b[j];
            for (int i = 0; i < feat; ++i) a += x.v[static_cast<std::size_t>(b) * feat + i] * rl.w[static_cast<std::size_t>(i) * l.out + j];
            y.at(b, j, 0, 0) = l.relu ? relu(a) : a;
          }
        return y;
      }
      const int ho = (x.h + 2 * l.pad - l.k) / l.stride + 1;
      const int wo = (x.w + 2 * l.pad - l.k) / l.stride + 1;
      RefTensor y(x.n, l.out, ho, wo);
      for (int b = 0; b < x.n; ++b)
        for (int j = 0; j < l.out; ++j)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              double a = rl.b.empty() ? 0.0 : rl.b[j];
              for (int ci = 0; ci < x.c; ++ci)
                for (int ky = 0; ky < l.k; ++ky)
                  for (int kx = 0; kx < l.k; ++kx) {
                    const int iy = oy * l.stride + ky - l.pad, ix = ox * l.stride + kx - l.pad;
                    if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                    a += x.at(b, ci, iy, ix) * rl.w[static_cast<std::size_t>((ci * l.k + ky) * l.k + kx) * l.out + j];
                  }
              y.at(b, j, oy, ox) = l.relu ? relu(a) : a;
            }
      return y;
    }
    case LayerKind::kMaxPool: {
      const int ho = (x.h - l.k) / l.stride + 1, wo = (x.w - l.k) / l.stride + 1;
      RefTensor y(x.n, x.c, ho, wo);
      for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              double best = -INFINITY;
              int arg = 0;
              for (int ky = 0; ky < l.k; ++ky)
                for (int kx = 0; kx < l.k; ++kx) {
                  const double v = x.at(b, ch, oy * l.stride + ky, ox * l.stride + kx);
                  if (v > best) {
                    best = v;
                    arg = ky * l.k + kx;
                  }
                }
              if (pat) pat->push_back(arg);
              y.at(b, ch, oy, ox) = best;
            }
      return y;
    }
    case LayerKind::kReLU: {
      RefTensor y = x;
      for (double& v : y.v) v = relu(v);
      return y;
    }
    case LayerKind::kBatchNorm: {
      RefTensor y = x;
      for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch) {
          const double s = l.weights[ch] / std::sqrt(static_cast<double>(l.running_var[ch]) + l.eps);
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx)
              y.at(b, ch, yy, xx) = (x.at(b, ch, yy, xx) - l.running_mean[ch]) * s + l.bias[ch];
        }
      return y;
    }
    case LayerKind::kSoftmax:
      return x;
  }
  return x;
}

inline RefTensor ref_forward(const std::vector<RefLayer>& layers, RefTensor x, const Mask& mask_after_first = {},
                             Pattern* pat = nullptr) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ref_apply(layers[i], x, pat);
    if (i == 0 && !mask_after_first.empty()) {
      for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
          if (!mask_after_first[ch])
            for (int yy = 0; yy < x.h; ++yy)
              for (int xx = 0; xx < x.w; ++xx) x.at(b, ch, yy, xx) = 0.0;
    }
  }
  return x;
}

inline std::vector<RefLayer> ref_layers(const std::vector<LayerSpec>& layers) {
  std::vector<RefLayer> out;
  for (const auto& l : layers) out.emplace_back(l);
  return out;
}

inline double max_abs(const std::vector<float>& v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

}  // namespace ldrf::testing
