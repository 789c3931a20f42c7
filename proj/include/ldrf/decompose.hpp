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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldrf/io.hpp"
#include "ldrf/network.hpp"
#include "ldrf/train.hpp"

namespace ldrf {

/// A linear layer split as W = Q R.
///
/// `q` is the k x k embedding factor (rows in*k*k, cols z) and `r` the 1 x 1
/// transformation factor (z x out). The embedding is normalized per channel,
/// so (x Q + q_bias) has zero mean and unit variance on the statistics batch
/// once fold_normalization has been applied; `norm_mean`/`norm_var` record the
/// folded statistics.
struct DecomposedLayer {
  std::string name;
  int k = 1, pad = 0, stride = 1;
  int in = 0, out = 0;
  bool relu = false;
  bool flatten = false;
  int z = 0;
  Matrix q;
  Matrix r;
  std::vector<float> q_bias;
  std::vector<float> r_bias;
  std::vector<float> norm_mean;
  std::vector<float> norm_var;

  LayerSpec embed_layer() const;
  LayerSpec transform_layer() const;
  static DecomposedLayer from_layers(const LayerSpec& embed, const LayerSpec& transform);
};

struct RankEntry {
  std::string name;
  std::vector<double> singular_values;
  std::vector<double> cum_energy;
  int z = 0;
  int n = 0;
};

struct RankReport {
  double energy = 0.0;
  std::vector<RankEntry> layers;

  const RankEntry& at(const std::string& name) const;
  nlohmann::json to_json() const;
  static RankReport from_json(const nlohmann::json& j);
};

/// Normalized cumulative sums of `s` (last entry 1).
std::vector<double> cumulative_energy(const std::vector<double>& s);

/// Smallest z whose leading singular values hold at least `energy` of sum(s).
int estimate_rank(const std::vector<double>& s, double energy);

RankEntry rank_entry(const LayerSpec& layer, double energy);

DecomposedLayer decompose_layer(const LayerSpec& layer, double energy);

/// Folds per-channel embedding statistics into the factors; output-invariant.
DecomposedLayer fold_normalization(const DecomposedLayer& layer, const std::vector<double>& mean,
                                   const std::vector<double>& var);

struct DecomposeOptions {
  int stats_batches = 8;
  int stats_batch_size = 64;
  double classifier_energy = 0.0;  // energy for the logits layer, 0 uses the network energy
  int finetune_iters = 0;          // stage-1 short fine-tune budget, 0 disables
  OptimSettings finetune;
};

struct DecomposeResult {
  Network net;
  RankReport report;
};

/// Rank analysis only (no data needed).
RankReport analyze_network(const Network& net, double energy);

/// Replaces every linear layer by an EmbedConv + PointwiseConv pair, folds
/// embedding normalization measured on `data` and optionally fine-tunes.
DecomposeResult decompose_network(const Network& net, double energy, const Dataset& data,
                                  const DecomposeOptions& options = {});

/// Index pairs (embed, transform) of every decomposed layer, in order.
std::vector<std::pair<std::size_t, std::size_t>> decomposed_pairs(const Network& net);

struct EnergySearchResult {
  double energy = 0.0;
  double accuracy = 0.0;
  double reference_accuracy = 0.0;
  bool recovered = false;
  DecomposeResult result;
};

/// Scans energy from `start` to 0.9 in steps of 0.05 and stops at the first
/// value whose decomposed (and optionally fine-tuned) network is within
/// `tolerance` accuracy of the original on `validation`.
EnergySearchResult search_energy(const Network& net, const Dataset& data, const Dataset& validation,
                                 double tolerance, double start, const DecomposeOptions& options = {});

}  // namespace ldrf
