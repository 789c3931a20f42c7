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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldrf/io.hpp"
#include "ldrf/network.hpp"
#include "ldrf/pruner.hpp"
#include "ldrf/train.hpp"

namespace ldrf {

/// One embedding-space reconstruction step.
///
/// `path` runs from the transformation factor R' of the pruned layer to the
/// embedding factor Q' of the next layer, including anything in between
/// (pooling). `mask` multiplies the output of path[0] after its ReLU.
/// `input` holds the pruned network's embedding feeding path[0] and `target`
/// the original network's embedding at the end of the path.
struct ReconProblem {
  std::string layer;
  std::vector<LayerSpec> path;
  Mask mask;
  Tensor4 input;
  Tensor4 target;
};

/// Indices of the trainable factors inside `path` (the first and last linear layers).
std::vector<bool> recon_trainable(const std::vector<LayerSpec>& path);

/// Squared reconstruction error summed over embedding channels and averaged
/// over samples and spatial positions, evaluated on `samples` (all when empty).
double recon_loss(const ReconProblem& p, const std::vector<int>& samples = {});

struct ReconGrad {
  double loss = 0.0;
  std::vector<LinearGrad> grads;  // one per path layer, empty for frozen ones
};

ReconGrad recon_grad(const ReconProblem& p, const std::vector<int>& samples = {});

struct OptimizeResult {
  std::vector<LayerSpec> path;  // optimized copy of p.path
  double init_loss = 0.0;
  double final_loss = 0.0;
  int iters = 0;
  std::vector<double> history;
};

/// Mini-batch SGD on the reconstruction loss. Returns the best checkpoint
/// seen at evaluation points, so final_loss never exceeds init_loss.
OptimizeResult optimize_layer(const ReconProblem& p, const OptimSettings& settings);

/// Trains a PointwiseConv classifier factor on fixed embeddings with softmax
/// cross-entropy. `layer` is updated in place.
TrainReport train_final_layer(LayerSpec& layer, const Tensor4& embeddings, const std::vector<std::uint32_t>& labels,
                              const OptimSettings& settings);

struct LayerLoss {
  std::string layer;
  int k = 0;
  int z = 0;
  double init_loss = 0.0;
  double final_loss = 0.0;
  int iters = 0;

  nlohmann::json to_json() const;
};

struct PruneResult {
  Network net;
  std::vector<LayerLoss> losses;
  TrainReport final_layer;  // iters == 0 when skipped

  nlohmann::json report_json(const PruneConfig& cfg) const;
};

/// Full pruning pass over a decomposed network. Layer losses are appended to
/// `progress` as they complete, so callers keep a partial report when a later
/// layer diverges.
PruneResult ldrf_prune_network(const Network& decomposed, const PruneConfig& cfg, const Dataset& data,
                               std::vector<LayerLoss>* progress = nullptr);

/// Restricts `layer` to the input channels in `survivors` and refits weights
/// and bias by least squares so that its pre-activation response to `input`
/// matches `target`. Rows of dropped channels are zeroed; shapes are kept.
/// At most `max_rows` output positions (seeded sample) enter the fit.
LayerSpec baseline_prune_layer(const LayerSpec& layer, const Mask& survivors, const Tensor4& input,
                               const Tensor4& target, std::uint64_t seed, std::size_t max_rows = 16384);

/// Conventional layer-by-layer pruning of a plain network: the output filters
/// of each configured layer are selected by `cfg.criterion` and dropped, then
/// the next linear layer is refit to the original network's pre-activations.
PruneResult baseline_prune_network(const Network& net, const PruneConfig& cfg, const Dataset& data);

/// Optional end-to-end fine-tune of every linear layer, with pruned channels
/// held at zero.
TrainReport finetune_network(Network& net, const Dataset& data, const OptimSettings& settings);

}  // namespace ldrf
