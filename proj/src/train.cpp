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

#include "ldrf/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldrf/error.hpp"

namespace ldrf {

Tensor4 Tape::forward(const std::vector<LayerSpec>& layers, const Tensor4& x, const std::map<std::size_t, Mask>& masks) {
  entries_.clear();
  entries_.resize(layers.size());
  masks_ = masks;
  batch_ = x.n();
  Tensor4 cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    require(l.kind != LayerKind::kBatchNorm, "tape: fold batch norm '" + l.name + "' before training");
    Entry& e = entries_[i];
    e.in_shape = cur.sample_shape();
    cur = apply_layer(l, cur, l.is_linear() ? &e.cols : nullptr, l.kind == LayerKind::kMaxPool ? &e.argmax : nullptr);
    if (auto it = masks.find(i); it != masks.end()) {
      require(it->second.size() == static_cast<std::size_t>(cur.c()), "tape: mask length mismatch at " + l.name);
      const std::size_t plane = static_cast<std::size_t>(cur.h()) * cur.w();
      for (int b = 0; b < cur.n(); ++b)
        for (int c = 0; c < cur.c(); ++c)
          if (!it->second[c]) std::fill_n(cur.data().begin() + (static_cast<std::size_t>(b) * cur.c() + c) * plane, plane, 0.0f);
    }
    e.output = cur;
  }
  return cur;
}

namespace {

// Scatters a patch-matrix gradient back onto the input image.
Tensor4 col2im(const Matrix& dcols, int n, Shape in, int k, int pad, int stride) {
  const int ho = conv_out_size(in.h, k, pad, stride);
  const int wo = conv_out_size(in.w, k, pad, stride);
  Tensor4 dx(n, in.c, in.h, in.w);
  std::size_t r = 0;
  for (int b = 0; b < n; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++r) {
        const float* row = dcols.row(r).data();
        std::size_t col = 0;
        for (int ci = 0; ci < in.c; ++ci)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad;
            for (int kx = 0; kx < k; ++kx, ++col) {
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
              dx.at(b, ci, iy, ix) += row[col];
            }
          }
      }
  return dx;
}

}  // namespace

std::vector<LinearGrad> Tape::backward(const std::vector<LayerSpec>& layers, const Tensor4& grad_out,
                                       const std::vector<bool>& trainable, Tensor4* grad_in) const {
  require(layers.size() == entries_.size(), "tape: backward called with a different layer list");
  require(trainable.size() == layers.size(), "tape: trainable flags length mismatch");
  std::vector<LinearGrad> grads(layers.size());

  // Layers before the first trainable one need no input gradient.
  std::size_t first_needed = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (trainable[i]) {
      first_needed = i;
      break;
    }
  if (grad_in) first_needed = 0;

  Tensor4 g = grad_out;
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    if (ii < first_needed) break;
    const LayerSpec& l = layers[ii];
    const Entry& e = entries_[ii];
    require(g.size() == e.output.size(), "tape: gradient shape mismatch at " + l.name);
    const bool need_input_grad = ii > first_needed || (ii == 0 && grad_in);
    const auto mask_it = masks_.find(ii);

    if (mask_it != masks_.end()) {
      const std::size_t plane = static_cast<std::size_t>(e.output.h()) * e.output.w();
      for (int b = 0; b < batch_; ++b)
        for (int c = 0; c < e.output.c(); ++c)
          if (!mask_it->second[c])
            std::fill_n(g.data().begin() + (static_cast<std::size_t>(b) * e.output.c() + c) * plane, plane, 0.0f);
    }

    switch (l.kind) {
      case LayerKind::kConv2D:
      case LayerKind::kDense:
      case LayerKind::kEmbedConv:
      case LayerKind::kPointwiseConv: {
        const int out_c = l.out;
        const std::size_t plane = static_cast<std::size_t>(e.output.h()) * e.output.w();
        Matrix dy(static_cast<std::size_t>(batch_) * plane, static_cast<std::size_t>(out_c));
        for (int b = 0; b < batch_; ++b)
          for (int j = 0; j < out_c; ++j) {
            const std::size_t base = (static_cast<std::size_t>(b) * out_c + j) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              float v = g.data()[base + p];
              if (l.relu && !(e.output.data()[base + p] > 0.0f)) v = 0.0f;
              dy(b * plane + p, j) = v;
            }
          }
        if (trainable[ii]) {
          const Matrix dw = matmul_at_b(e.cols, dy);
          grads[ii].weights.assign(dw.data().begin(), dw.data().end());
          grads[ii].bias.assign(out_c, 0.0);
          for (std::size_t r = 0; r < dy.rows(); ++r) {
            const float* row = dy.row(r).data();
            for (int j = 0; j < out_c; ++j) grads[ii].bias[j] += row[j];
          }
        }
        if (need_input_grad) {
          const Matrix dcols = matmul_a_bt(dy, l.weight_matrix());
          if (l.is_dense_style()) {
            g = Tensor4(batch_, e.in_shape.c, e.in_shape.h, e.in_shape.w);
            std::copy(dcols.data().begin(), dcols.data().end(), g.data().begin());
          } else {
            g = col2im(dcols, batch_, e.in_shape, l.k, l.pad, l.stride);
          }
        }
        break;
      }
      case LayerKind::kMaxPool: {
        if (need_input_grad) {
          Tensor4 dx(batch_, e.in_shape.c, e.in_shape.h, e.in_shape.w);
          for (std::size_t o = 0; o < e.argmax.size(); ++o) dx.data()[e.argmax[o]] += g.data()[o];
          g = std::move(dx);
        }
        break;
      }
      case LayerKind::kReLU: {
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!(e.output.data()[i] > 0.0f)) g.data()[i] = 0.0f;
        break;
      }
      case LayerKind::kSoftmax:
      case LayerKind::kBatchNorm:
        throw_invalid("tape: cannot back-propagate through " + std::string(to_string(l.kind)));
    }
  }
  if (grad_in) *grad_in = std::move(g);
  return grads;
}

SgdMomentum::SgdMomentum(const OptimSettings& settings, int total_iters)
    : settings_(settings), total_iters_(std::max(1, total_iters)) {}

double SgdMomentum::lr_at(int iter) const {
  if (!settings_.linear_decay) return settings_.lr;
  return settings_.lr * (1.0 - static_cast<double>(iter) / total_iters_);
}

void SgdMomentum::step(std::size_t slot, LayerSpec& layer, const LinearGrad& grad, int iter) {
  if (grad.weights.empty()) return;
  LinearGrad& v = velocity_[slot];
  if (v.weights.empty()) {
    v.weights.assign(grad.weights.size(), 0.0);
    v.bias.assign(grad.bias.size(), 0.0);
  }
  if (layer.bias.empty()) layer.bias.assign(layer.out, 0.0f);
  const auto sc = scale_.find(slot);
  const double lr = lr_at(iter) * (sc == scale_.end() ? 1.0 : sc->second);
  const double mu = settings_.momentum;
  for (std::size_t i = 0; i < grad.weights.size(); ++i) {
    v.weights[i] = mu * v.weights[i] + grad.weights[i] + settings_.weight_decay * layer.weights[i];
    layer.weights[i] = static_cast<float>(layer.weights[i] - lr * v.weights[i]);
  }
  for (std::size_t i = 0; i < grad.bias.size(); ++i) {
    v.bias[i] = mu * v.bias[i] + grad.bias[i];
    layer.bias[i] = static_cast<float>(layer.bias[i] - lr * v.bias[i]);
  }
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<std::uint32_t>& labels, Matrix* grad) {
  require(logits.rows() == labels.size(), "cross-entropy: label count mismatch");
  require(logits.rows() > 0, "cross-entropy: empty batch");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (grad) *grad = Matrix(n, c);
  double total = 0.0;
  std::vector<double> p(c);
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] < c, "cross-entropy: label out of range");
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    total += -(row[labels[i]] - mx - std::log(sum));
    if (grad) {
      for (std::size_t j = 0; j < c; ++j) {
        const double pj = p[j] / sum - (j == labels[i] ? 1.0 : 0.0);
        (*grad)(i, j) = static_cast<float>(pj / n);
      }
    }
  }
  return total / n;
}

BatchSampler::BatchSampler(int samples, int batch, std::uint64_t seed)
    : samples_(samples), batch_(std::min(batch, samples)), rng_(seed), order_(samples) {
  require(samples > 0 && batch > 0, "batch sampler: empty dataset or batch");
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<int> BatchSampler::next() {
  if (pos_ + batch_ > order_.size()) reshuffle();
  std::vector<int> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
  pos_ += batch_;
  return out;
}

namespace {

double dataset_loss(const Network& net, const Tensor4& x, const std::vector<std::uint32_t>& labels) {
  return softmax_cross_entropy(forward_chunked(net, x).logits, labels);
}

}  // namespace

TrainReport train_classifier(Network& net, const Tensor4& x, const std::vector<std::uint32_t>& labels,
                             const OptimSettings& settings, const std::vector<bool>& trainable_in) {
  require(x.n() > 0 && static_cast<std::size_t>(x.n()) == labels.size(), "train: sample/label count mismatch");
  require(x.sample_shape() == net.input, "train: data shape does not match network input");
  const std::size_t last = net.logits_layer();
  std::vector<LayerSpec> layers(net.layers.begin(), net.layers.begin() + static_cast<std::ptrdiff_t>(last + 1));
  std::vector<bool> trainable(layers.size(), false);
  for (std::size_t i = 0; i < layers.size(); ++i)
    trainable[i] = layers[i].is_linear() && (trainable_in.empty() || (i < trainable_in.size() && trainable_in[i]));

  const int epoch_iters = std::max(1, (x.n() + settings.batch - 1) / settings.batch);
  const int iters = settings.iters > 0 ? settings.iters : 2 * epoch_iters;
  SgdMomentum opt(settings, iters);
  BatchSampler sampler(x.n(), settings.batch, settings.seed);

  TrainReport rep;
  rep.init_loss = dataset_loss(net, x, labels);
  rep.history.push_back(rep.init_loss);
  const int eval_every = std::max(1, iters / 8);
  std::map<std::size_t, Mask> masks;
  for (auto& [idx, m] : mask_layer_indices(net))
    if (idx < layers.size()) masks.emplace(idx, std::move(m));
  Tape tape;
  for (int it = 0; it < iters; ++it) {
    const auto idx = sampler.next();
    const Tensor4 xb = x.gather(idx);
    std::vector<std::uint32_t> yb(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = labels[idx[i]];
    const Tensor4 out = tape.forward(layers, xb, masks);
    Matrix dlogits;
    softmax_cross_entropy(Matrix(static_cast<std::size_t>(out.n()), out.sample_size(), out.data()), yb, &dlogits);
    const Tensor4 gout(out.n(), out.c(), out.h(), out.w(), std::move(dlogits.data()));
    const auto grads = tape.backward(layers, gout, trainable);
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (trainable[i]) {
        opt.step(i, layers[i], grads[i], it);
        const auto finite = [](float v) { return std::isfinite(v); };
        if (!std::all_of(layers[i].weights.begin(), layers[i].weights.end(), finite))
          throw DivergenceError(layers[i].name, "parameters of " + layers[i].name +
                                                    " became non-finite at iteration " + std::to_string(it + 1));
      }
    if ((it + 1) % eval_every == 0 || it + 1 == iters) {
      for (std::size_t i = 0; i < layers.size(); ++i) net.layers[i] = layers[i];
      rep.history.push_back(dataset_loss(net, x, labels));
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) net.layers[i] = layers[i];
  rep.iters = iters;
  rep.final_loss = rep.history.back();
  return rep;
}

}  // namespace ldrf
