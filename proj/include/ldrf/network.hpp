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
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldrf/linalg.hpp"
#include "ldrf/tensor.hpp"

namespace ldrf {

enum class LayerKind {
  kConv2D,
  kDense,
  kEmbedConv,      // k x k factor Q of a decomposed layer
  kPointwiseConv,  // 1 x 1 factor R of a decomposed layer
  kMaxPool,
  kReLU,
  kSoftmax,
  kBatchNorm,
};

enum class NetForm { kPlain, kDecomposed, kSlim };

const char* to_string(LayerKind kind);
const char* to_string(NetForm form);
LayerKind layer_kind_from_string(const std::string& s);
NetForm net_form_from_string(const std::string& s);

/// One layer of a sequential network.
///
/// Linear layers store their weights as a (in*k*k) x out row-major matrix
/// whose row index is (ci*k + ky)*k + kx, which is exactly the im2col column
/// order. Dense layers (and embedding factors split off a Dense layer, marked
/// `flatten`) consume the NCHW-flattened input, so row index = (ci*h + y)*w + x.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv2D;
  std::string name;
  int k = 1;
  int pad = 0;
  int stride = 1;
  int in = 0;   // input channels, or flattened features for dense-style layers
  int out = 0;  // output channels
  bool relu = false;
  bool flatten = false;
  std::vector<float> weights;
  std::vector<float> bias;  // empty or length `out`
  // BatchNorm only: `weights` holds the scale, `bias` the shift.
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;

  bool is_linear() const;
  bool is_dense_style() const { return kind == LayerKind::kDense || flatten; }
  std::size_t fan_in() const;  // rows of the weight matrix
  Matrix weight_matrix() const;
  void set_weight_matrix(const Matrix& w);
  float bias_at(int j) const { return bias.empty() ? 0.0f : bias[j]; }
};

LayerSpec make_conv(std::string name, int in, int out, int k, int pad, int stride, bool relu);
LayerSpec make_dense(std::string name, int in, int out, bool relu);
LayerSpec make_maxpool(std::string name, int k, int stride);
LayerSpec make_relu(std::string name);
LayerSpec make_softmax(std::string name);
LayerSpec make_batchnorm(std::string name, int channels);

using Mask = std::vector<std::uint8_t>;

struct Network {
  std::string name;
  Shape input;
  NetForm form = NetForm::kPlain;
  std::vector<LayerSpec> layers;
  std::map<std::string, Mask> masks;  // provenance, keyed by source layer name
  nlohmann::json info = nlohmann::json::object();

  /// Output shape of every layer; throws invalid-argument when adjacent
  /// layers disagree on channel counts.
  std::vector<Shape> shapes() const;
  /// Index of the layer whose output is the logits (skips a terminal Softmax).
  std::size_t logits_layer() const;
  std::vector<std::size_t> linear_layers() const;
  std::size_t find(const std::string& layer_name) const;
  void validate() const;
};

/// Captured activations keyed by layer index.
using ActivationTrace = std::map<std::size_t, Tensor4>;

struct ForwardResult {
  Matrix logits;  // one row per sample
  ActivationTrace trace;
};

int conv_out_size(int in, int k, int pad, int stride);

/// Patch matrix of x: one row per (sample, out_y, out_x), columns (ci, ky, kx).
Matrix im2col(const Tensor4& x, int k, int pad, int stride);

/// Runs a single layer. For linear layers `cols` (when non-null) receives the
/// patch matrix used, which the backward pass reuses.
Tensor4 apply_layer(const LayerSpec& layer, const Tensor4& x, Matrix* cols = nullptr,
                    std::vector<std::uint32_t>* argmax = nullptr);

/// Pre-activation output of a linear layer (ReLU flag ignored).
Tensor4 linear_preactivation(const LayerSpec& layer, const Tensor4& x);

ForwardResult forward(const Network& net, const Tensor4& batch, const std::set<std::size_t>& capture = {});

/// Runs layers [first, last) on x.
Tensor4 forward_range(const Network& net, const Tensor4& x, std::size_t first, std::size_t last);

/// forward() over fixed-size chunks, concatenating per-sample results in input
/// order; `threads` == 0 reads LDRF_THREADS.
ForwardResult forward_chunked(const Network& net, const Tensor4& batch, const std::set<std::size_t>& capture = {},
                              int chunk = 256, int threads = 1);

/// Layer index that each entry of `net.masks` applies to: the layer of that
/// name, or its ".r" transformation factor in a decomposed network. Slim
/// networks carry masks as provenance only and yield an empty map.
std::map<std::size_t, Mask> mask_layer_indices(const Network& net);

Network fold_batchnorm(const Network& net);

/// Merges standalone ReLU layers into the preceding linear layer's flag.
Network fuse_relu(const Network& net);

/// Worker count from LDRF_THREADS (default 1).
int default_threads();

}  // namespace ldrf
