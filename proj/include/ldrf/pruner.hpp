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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldrf/decompose.hpp"
#include "ldrf/linalg.hpp"
#include "ldrf/network.hpp"
#include "ldrf/train.hpp"

namespace ldrf {

enum class Criterion { kTopK, kRandom, kApoz, kActivation, kWeight };

Criterion criterion_from_string(const std::string& s);
const char* to_string(Criterion c);
inline constexpr Criterion kAllCriteria[] = {Criterion::kTopK, Criterion::kRandom, Criterion::kApoz,
                                             Criterion::kActivation, Criterion::kWeight};

/// Legal keep counts (z, n]. When z == n the layer cannot be pruned and the
/// only legal count is n itself.
struct ValidRange {
  int z = 0;
  int n = 0;

  bool contains(int keep) const { return keep == n || (keep > z && keep <= n); }
  std::string to_string() const;
};

ValidRange valid_range(int z, int n);

struct LayerKeep {
  std::string name;
  int keep = 0;
};

/// Reconstruction optimizer defaults. Step sizes are normalized per factor, so lr is a unitless rate.
OptimSettings default_recon_optim();

struct PruneConfig {
  double energy = 0.65;
  std::vector<LayerKeep> layers;
  Criterion criterion = Criterion::kTopK;
  OptimSettings optim = default_recon_optim();
  std::uint64_t seed = 0;

  /// Keep count for `name`, or `n` when the layer is not listed.
  int keep_for(const std::string& name, int n) const;

  nlohmann::json to_json() const;
  static PruneConfig from_json(const nlohmann::json& j);
};

struct Violation {
  std::string layer;
  int keep = 0;
  int z = 0;
  int n = 0;
  std::string message;
};

std::vector<Violation> validate_config(const PruneConfig& cfg, const RankReport& report);

/// Per-output-channel importance; higher is kept first.
///   weight:     l1 norm of the filter (column of `filter_weights`)
///   activation: mean |activation| over samples and positions
///   apoz:       minus the fraction of zero activations
///   random:     seeded uniform draws
///   topk:       n - index (keeps the leading channels)
/// `activations` are post-ReLU outputs of the layer, required by apoz and activation.
std::vector<double> score_neurons(Criterion criterion, const Matrix& filter_weights, const Tensor4* activations,
                                  std::uint64_t seed);

/// Ones at the k highest scores, ties broken toward the lower channel index.
Mask build_mask(const std::vector<double>& scores, int k);

int popcount(const Mask& m);

}  // namespace ldrf
