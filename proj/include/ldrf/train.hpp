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
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "ldrf/network.hpp"

namespace ldrf {

/// Gradient of one linear layer, laid out like LayerSpec::weights / bias.
struct LinearGrad {
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Forward pass over a layer list that remembers what the backward pass needs.
/// An optional per-layer output mask multiplies the layer's output channels.
class Tape {
 public:
  Tensor4 forward(const std::vector<LayerSpec>& layers, const Tensor4& x,
                  const std::map<std::size_t, Mask>& masks = {});

  /// Back-propagates `grad_out` (gradient w.r.t. the last layer's output).
  /// Weight gradients are produced for linear layers flagged in `trainable`
  /// and zero-sized for the rest. `grad_in`, when non-null, receives the
  /// gradient w.r.t. the tape input.
  std::vector<LinearGrad> backward(const std::vector<LayerSpec>& layers, const Tensor4& grad_out,
                                   const std::vector<bool>& trainable, Tensor4* grad_in = nullptr) const;

 private:
  struct Entry {
    Shape in_shape;
    Tensor4 output;
    Matrix cols;
    std::vector<std::uint32_t> argmax;
  };
  std::vector<Entry> entries_;
  std::map<std::size_t, Mask> masks_;
  int batch_ = 0;
};

/// Mini-batch SGD with heavy-ball momentum and optional linear lr decay.
struct OptimSettings {
  double lr = 0.01;
  double momentum = 0.9;
  int iters = 0;  // 0 selects the module's default budget
  int batch = 32;
  std::uint64_t seed = 0;
  bool linear_decay = true;
  double weight_decay = 0.0;
};

class SgdMomentum {
 public:
  SgdMomentum(const OptimSettings& settings, int total_iters);

  double lr_at(int iter) const;
  /// Multiplies the step size of `slot` by `scale` (default 1).
  void set_scale(std::size_t slot, double scale) { scale_[slot] = scale; }
  /// Updates `layer` in place with `grad`; `slot` identifies the velocity buffer.
  void step(std::size_t slot, LayerSpec& layer, const LinearGrad& grad, int iter);

 private:
  OptimSettings settings_;
  int total_iters_;
  std::map<std::size_t, LinearGrad> velocity_;
  std::map<std::size_t, double> scale_;
};

/// Mean softmax cross-entropy of `logits` (N x C) and its gradient.
double softmax_cross_entropy(const Matrix& logits, const std::vector<std::uint32_t>& labels,
                             Matrix* grad = nullptr);

struct TrainReport {
  double init_loss = 0.0;
  double final_loss = 0.0;
  int iters = 0;
  std::vector<double> history;
};

/// Trains the linear layers selected by `trainable` (all when empty) of `net`
/// against class labels. Layers never trainable: BatchNorm (fold it first).
TrainReport train_classifier(Network& net, const Tensor4& x, const std::vector<std::uint32_t>& labels,
                             const OptimSettings& settings, const std::vector<bool>& trainable = {});

/// Per-epoch shuffled mini-batch index stream.
class BatchSampler {
 public:
  BatchSampler(int samples, int batch, std::uint64_t seed);
  std::vector<int> next();

 private:
  int samples_;
  int batch_;
  std::mt19937_64 rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
  void reshuffle();
};

}  // namespace ldrf
