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

#include "ldrf/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "ldrf/error.hpp"

namespace ldrf {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kDense: return "Dense";
    case LayerKind::kEmbedConv: return "EmbedConv";
    case LayerKind::kPointwiseConv: return "PointwiseConv";
    case LayerKind::kMaxPool: return "MaxPool";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kSoftmax: return "Softmax";
    case LayerKind::kBatchNorm: return "BatchNorm";
  }
  return "?";
}

const char* to_string(NetForm form) {
  switch (form) {
    case NetForm::kPlain: return "plain";
    case NetForm::kDecomposed: return "decomposed";
    case NetForm::kSlim: return "slim";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (LayerKind k : {LayerKind::kConv2D, LayerKind::kDense, LayerKind::kEmbedConv, LayerKind::kPointwiseConv,
                      LayerKind::kMaxPool, LayerKind::kReLU, LayerKind::kSoftmax, LayerKind::kBatchNorm}) {
    if (s == to_string(k)) return k;
  }
  throw_invalid("unknown layer kind '" + s + "'");
}

NetForm net_form_from_string(const std::string& s) {
  for (NetForm f : {NetForm::kPlain, NetForm::kDecomposed, NetForm::kSlim}) {
    if (s == to_string(f)) return f;
  }
  throw_invalid("unknown network form '" + s + "'");
}

bool LayerSpec::is_linear() const {
  return kind == LayerKind::kConv2D || kind == LayerKind::kDense || kind == LayerKind::kEmbedConv ||
         kind == LayerKind::kPointwiseConv;
}

std::size_t LayerSpec::fan_in() const {
  if (is_dense_style()) return static_cast<std::size_t>(in);
  return static_cast<std::size_t>(in) * k * k;
}

Matrix LayerSpec::weight_matrix() const {
  require(is_linear(), "layer " + name + " has no weight matrix");
  return Matrix(fan_in(), static_cast<std::size_t>(out), weights);
}

void LayerSpec::set_weight_matrix(const Matrix& w) {
  require(w.rows() == fan_in() && w.cols() == static_cast<std::size_t>(out),
          "layer " + name + ": weight matrix shape mismatch");
  weights = w.data();
}

LayerSpec make_conv(std::string name, int in, int out, int k, int pad, int stride, bool relu) {
  LayerSpec l;
  l.kind = LayerKind::kConv2D;
  l.name = std::move(name);
  l.in = in;
  l.out = out;
  l.k = k;
  l.pad = pad;
  l.stride = stride;
  l.relu = relu;
  l.weights.assign(static_cast<std::size_t>(in) * k * k * out, 0.0f);
  l.bias.assign(out, 0.0f);
  return l;
}

LayerSpec make_dense(std::string name, int in, int out, bool relu) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.name = std::move(name);
  l.in = in;
  l.out = out;
  l.relu = relu;
  l.weights.assign(static_cast<std::size_t>(in) * out, 0.0f);
  l.bias.assign(out, 0.0f);
  return l;
}

LayerSpec make_maxpool(std::string name, int k, int stride) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.name = std::move(name);
  l.k = k;
  l.stride = stride;
  return l;
}

LayerSpec make_relu(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kReLU;
  l.name = std::move(name);
  return l;
}

LayerSpec make_softmax(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::kSoftmax;
  l.name = std::move(name);
  return l;
}

LayerSpec make_batchnorm(std::string name, int channels) {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  l.name = std::move(name);
  l.in = l.out = channels;
  l.weights.assign(channels, 1.0f);
  l.bias.assign(channels, 0.0f);
  l.running_mean.assign(channels, 0.0f);
  l.running_var.assign(channels, 1.0f);
  return l;
}

int conv_out_size(int in, int k, int pad, int stride) {
  if (stride < 1 || k < 1 || in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

std::vector<Shape> Network::shapes() const {
  std::vector<Shape> out;
  out.reserve(layers.size());
  Shape s = input;
  for (const auto& l : layers) {
    const std::string where = "layer '" + l.name + "' (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::kConv2D:
      case LayerKind::kDense:
      case LayerKind::kEmbedConv:
      case LayerKind::kPointwiseConv: {
        require(l.weights.size() == l.fan_in() * static_cast<std::size_t>(l.out),
                where + ": weight length " + std::to_string(l.weights.size()) + " != " +
                    std::to_string(l.fan_in() * l.out));
        require(l.bias.empty() || l.bias.size() == static_cast<std::size_t>(l.out), where + ": bias length mismatch");
        if (l.is_dense_style()) {
          require(s.count() == static_cast<std::size_t>(l.in),
                  where + ": expects " + std::to_string(l.in) + " inputs, got " + std::to_string(s.count()));
          s = {l.out, 1, 1};
        } else {
          require(s.c == l.in, where + ": expects " + std::to_string(l.in) + " input channels, got " +
                                   std::to_string(s.c));
          const int ho = conv_out_size(s.h, l.k, l.pad, l.stride);
          const int wo = conv_out_size(s.w, l.k, l.pad, l.stride);
          require(ho >= 1 && wo >= 1, where + ": kernel larger than padded input");
          s = {l.out, ho, wo};
        }
        break;
      }
      case LayerKind::kMaxPool: {
        const int ho = conv_out_size(s.h, l.k, 0, l.stride);
        const int wo = conv_out_size(s.w, l.k, 0, l.stride);
        require(ho >= 1 && wo >= 1, where + ": pool window larger than input");
        s = {s.c, ho, wo};
        break;
      }
      case LayerKind::kBatchNorm:
        require(l.weights.size() == static_cast<std::size_t>(s.c) && l.bias.size() == l.weights.size() &&
                    l.running_mean.size() == l.weights.size() && l.running_var.size() == l.weights.size(),
                where + ": statistics length does not match " + std::to_string(s.c) + " channels");
        break;
      case LayerKind::kReLU:
      case LayerKind::kSoftmax:
        break;
    }
    out.push_back(s);
  }
  return out;
}

std::size_t Network::logits_layer() const {
  require(!layers.empty(), "network has no layers");
  std::size_t idx = layers.size() - 1;
  if (layers[idx].kind == LayerKind::kSoftmax) {
    require(idx >= 1, "network consists of a lone softmax");
    --idx;
  }
  return idx;
}

std::vector<std::size_t> Network::linear_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].is_linear()) out.push_back(i);
  return out;
}

std::size_t Network::find(const std::string& layer_name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == layer_name) return i;
  throw_invalid("no layer named '" + layer_name + "'");
}

void Network::validate() const {
  require(input.c > 0 && input.h > 0 && input.w > 0, "network input shape must be positive");
  (void)shapes();
  const std::size_t last = logits_layer();
  require(layers[last].is_linear(), "network must end in a linear classifier layer");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    require(layers[i].kind != LayerKind::kSoftmax, "softmax is only allowed as the terminal layer");
}

Matrix im2col(const Tensor4& x, int k, int pad, int stride) {
  require(k >= 1 && stride >= 1 && pad >= 0, "im2col: invalid kernel geometry");
  const int ho = conv_out_size(x.h(), k, pad, stride);
  const int wo = conv_out_size(x.w(), k, pad, stride);
  require(ho >= 1 && wo >= 1, "im2col: kernel " + std::to_string(k) + " larger than padded input");
  const int c = x.c();
  Matrix cols(static_cast<std::size_t>(x.n()) * ho * wo, static_cast<std::size_t>(c) * k * k);
  std::size_t r = 0;
  for (int b = 0; b < x.n(); ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++r) {
        float* row = cols.row(r).data();
        std::size_t col = 0;
        for (int ci = 0; ci < c; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad;
            for (int kx = 0; kx < k; ++kx, ++col) {
              const int ix = ox * stride + kx - pad;
              row[col] = (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) ? 0.0f : x.at(b, ci, iy, ix);
            }
          }
        }
      }
    }
  }
  return cols;
}

namespace {

Matrix flatten(const Tensor4& x) {
  return Matrix(static_cast<std::size_t>(x.n()), x.sample_size(), x.data());
}

Tensor4 linear_apply(const LayerSpec& l, const Tensor4& x, Matrix* cols_out, bool with_relu) {
  const Matrix w = l.weight_matrix();
  Matrix cols;
  int ho = 1, wo = 1;
  if (l.is_dense_style()) {
    require(x.sample_size() == static_cast<std::size_t>(l.in), "layer " + l.name + ": input size mismatch");
    cols = flatten(x);
  } else {
    require(x.c() == l.in, "layer " + l.name + ": input channel mismatch");
    ho = conv_out_size(x.h(), l.k, l.pad, l.stride);
    wo = conv_out_size(x.w(), l.k, l.pad, l.stride);
    cols = im2col(x, l.k, l.pad, l.stride);
  }
  const Matrix y = matmul(cols, w);
  Tensor4 out(x.n(), l.out, ho, wo);
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int b = 0; b < x.n(); ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const float* yrow = y.row(b * plane + p).data();
      for (int j = 0; j < l.out; ++j) {
        float v = yrow[j] + l.bias_at(j);
        if (with_relu && !(v > 0.0f)) v = 0.0f;
        out.data()[(static_cast<std::size_t>(b) * l.out + j) * plane + p] = v;
      }
    }
  }
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

}  // namespace

Tensor4 linear_preactivation(const LayerSpec& layer, const Tensor4& x) {
  require(layer.is_linear(), "linear_preactivation on non-linear layer " + layer.name);
  return linear_apply(layer, x, nullptr, false);
}

Tensor4 apply_layer(const LayerSpec& l, const Tensor4& x, Matrix* cols, std::vector<std::uint32_t>* argmax) {
  switch (l.kind) {
    case LayerKind::kConv2D:
    case LayerKind::kDense:
    case LayerKind::kEmbedConv:
    case LayerKind::kPointwiseConv:
      return linear_apply(l, x, cols, l.relu);
    case LayerKind::kMaxPool: {
      const int ho = conv_out_size(x.h(), l.k, 0, l.stride);
      const int wo = conv_out_size(x.w(), l.k, 0, l.stride);
      require(ho >= 1 && wo >= 1, "layer " + l.name + ": pool window larger than input");
      Tensor4 out(x.n(), x.c(), ho, wo);
      if (argmax) argmax->assign(out.size(), 0);
      std::size_t o = 0;
      for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox, ++o) {
              float best = -std::numeric_limits<float>::infinity();
              std::uint32_t best_idx = 0;
              for (int ky = 0; ky < l.k; ++ky)
                for (int kx = 0; kx < l.k; ++kx) {
                  const int iy = oy * l.stride + ky, ix = ox * l.stride + kx;
                  const float v = x.at(b, c, iy, ix);
                  if (v > best) {
                    best = v;
                    best_idx = static_cast<std::uint32_t>(((static_cast<std::size_t>(b) * x.c() + c) * x.h() + iy) *
                                                              x.w() + ix);
                  }
                }
              out.data()[o] = best;
              if (argmax) (*argmax)[o] = best_idx;
            }
      return out;
    }
    case LayerKind::kReLU: {
      Tensor4 out = x;
      for (float& v : out.data())
        if (!(v > 0.0f)) v = 0.0f;
      return out;
    }
    case LayerKind::kSoftmax: {
      Tensor4 out = x;
      for (int b = 0; b < x.n(); ++b) {
        auto s = out.sample(b);
        const float mx = *std::max_element(s.begin(), s.end());
        double sum = 0.0;
        for (float& v : s) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (float& v : s) v = static_cast<float>(v / sum);
      }
      return out;
    }
    case LayerKind::kBatchNorm: {
      require(x.c() == static_cast<int>(l.weights.size()), "layer " + l.name + ": channel mismatch");
      Tensor4 out = x;
      const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
      for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
          const double scale = l.weights[c] / std::sqrt(static_cast<double>(l.running_var[c]) + l.eps);
          float* p = out.data().data() + (static_cast<std::size_t>(b) * x.c() + c) * plane;
          for (std::size_t i = 0; i < plane; ++i)
            p[i] = static_cast<float>((p[i] - l.running_mean[c]) * scale + l.bias[c]);
        }
      return out;
    }
  }
  throw_invalid("unsupported layer kind");
}

ForwardResult forward(const Network& net, const Tensor4& batch, const std::set<std::size_t>& capture) {
  require(batch.sample_shape() == net.input,
          "batch sample shape (" + std::to_string(batch.c()) + "," + std::to_string(batch.h()) + "," +
              std::to_string(batch.w()) + ") does not match network input (" + std::to_string(net.input.c) + "," +
              std::to_string(net.input.h) + "," + std::to_string(net.input.w) + ")");
  const std::size_t last = net.logits_layer();
  ForwardResult res;
  Tensor4 x = batch;
  Tensor4 logits;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == LayerKind::kSoftmax && i > last && !capture.count(i)) break;
    x = apply_layer(net.layers[i], x);
    if (capture.count(i)) res.trace.emplace(i, x);
    if (i == last) logits = x;
  }
  res.logits = Matrix(static_cast<std::size_t>(logits.n()), logits.sample_size(), std::move(logits.data()));
  return res;
}

Tensor4 forward_range(const Network& net, const Tensor4& x, std::size_t first, std::size_t last) {
  require(first <= last && last <= net.layers.size(), "forward_range: bad layer range");
  Tensor4 cur = x;
  for (std::size_t i = first; i < last; ++i) cur = apply_layer(net.layers[i], cur);
  return cur;
}

ForwardResult forward_chunked(const Network& net, const Tensor4& batch, const std::set<std::size_t>& capture,
                              int chunk, int threads) {
  require(chunk >= 1, "forward_chunked: chunk must be positive");
  if (threads <= 0) threads = default_threads();
  const int n = batch.n();
  const int pieces = std::max(1, (n + chunk - 1) / chunk);
  if (pieces == 1) return forward(net, batch, capture);

  std::vector<ForwardResult> parts(pieces);
  auto work = [&](int worker) {
    for (int p = worker; p < pieces; p += threads) {
      const int begin = p * chunk;
      parts[p] = forward(net, batch.slice(begin, std::min(chunk, n - begin)), capture);
    }
  };
  threads = std::min(threads, pieces);
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }

  ForwardResult res;
  const std::size_t cols = parts[0].logits.cols();
  std::vector<float> logits;
  logits.reserve(static_cast<std::size_t>(n) * cols);
  for (const auto& p : parts) logits.insert(logits.end(), p.logits.data().begin(), p.logits.data().end());
  res.logits = Matrix(static_cast<std::size_t>(n), cols, std::move(logits));
  for (std::size_t idx : capture) {
    std::vector<Tensor4> pieces_of_layer;
    for (auto& p : parts) {
      auto it = p.trace.find(idx);
      if (it != p.trace.end()) pieces_of_layer.push_back(std::move(it->second));
    }
    if (!pieces_of_layer.empty()) res.trace.emplace(idx, concat_samples(pieces_of_layer));
  }
  return res;
}

Network fold_batchnorm(const Network& net) {
  Network out = net;
  out.layers.clear();
  for (const auto& l : net.layers) {
    if (l.kind != LayerKind::kBatchNorm) {
      out.layers.push_back(l);
      continue;
    }
    if (out.layers.empty() || !out.layers.back().is_linear() || out.layers.back().relu) {
      throw Error(ErrorCode::kUnsupportedStructure,
                  "batch norm '" + l.name + "' is not directly preceded by a linear layer without activation");
    }
    LayerSpec& prev = out.layers.back();
    require(static_cast<int>(l.weights.size()) == prev.out, "batch norm '" + l.name + "' channel mismatch");
    if (prev.bias.empty()) prev.bias.assign(prev.out, 0.0f);
    const std::size_t rows = prev.fan_in();
    for (int j = 0; j < prev.out; ++j) {
      const double scale = l.weights[j] / std::sqrt(static_cast<double>(l.running_var[j]) + l.eps);
      for (std::size_t r = 0; r < rows; ++r) {
        float& w = prev.weights[r * prev.out + j];
        w = static_cast<float>(w * scale);
      }
      prev.bias[j] = static_cast<float>((prev.bias[j] - l.running_mean[j]) * scale + l.bias[j]);
    }
  }
  return out;
}

Network fuse_relu(const Network& net) {
  Network out = net;
  out.layers.clear();
  for (const auto& l : net.layers) {
    if (l.kind == LayerKind::kReLU && !out.layers.empty() && out.layers.back().is_linear()) {
      out.layers.back().relu = true;
      continue;
    }
    out.layers.push_back(l);
  }
  return out;
}

std::map<std::size_t, Mask> mask_layer_indices(const Network& net) {
  std::map<std::size_t, Mask> out;
  if (net.form == NetForm::kSlim) return out;
  for (const auto& [name, mask] : net.masks) {
    std::size_t idx = net.layers.size();
    for (std::size_t i = 0; i < net.layers.size(); ++i)
      if (net.layers[i].name == name || net.layers[i].name == name + ".r") idx = i;
    require(idx < net.layers.size(), "mask refers to unknown layer '" + name + "'");
    require(mask.size() == static_cast<std::size_t>(net.layers[idx].out),
            "mask for '" + name + "' has length " + std::to_string(mask.size()) + ", layer has " +
                std::to_string(net.layers[idx].out) + " outputs");
    out.emplace(idx, mask);
  }
  return out;
}

int default_threads() {
  if (const char* env = std::getenv("LDRF_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

}  // namespace ldrf
