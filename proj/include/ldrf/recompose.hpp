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

#include <string>

#include "ldrf/network.hpp"

namespace ldrf {

/// A decomposed layer merged back into a single Conv2D or Dense layer.
struct SlimLayer {
  LayerSpec layer;
  std::string source;  // base name of the decomposed pair
  Mask mask;           // output mask recorded for the source layer, empty when none
};

/// W' = Q' R' and bias R'^T q_bias + r_bias.
SlimLayer recompose_layer(const LayerSpec& embed, const LayerSpec& transform);

/// Merges every EmbedConv + PointwiseConv pair; masks carry over unchanged
/// and the result is a plain network of the original depth.
Network recompose_network(const Network& decomposed);

/// Removes masked output channels of every masked layer and the matching input
/// slices of the next linear layer. Accepts plain or decomposed networks
/// (decomposed ones are recomposed first). The result has form slim.
Network strip_pruned(const Network& net);

struct Equivalence {
  double max_abs_dev = 0.0;
  bool pass = false;
};

/// Max absolute logit deviation between two networks on `batch`.
Equivalence verify_equivalence(const Network& a, const Network& b, const Tensor4& batch, double tol);

}  // namespace ldrf
