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

namespace ldrf {

enum class FlopsScope { kConv, kAll };

FlopsScope flops_scope_from_string(const std::string& s);
const char* to_string(FlopsScope scope);

/// Multiply-accumulates of one layer for a single sample with the given
/// input shape. Pooling, activations and normalization cost nothing.
std::uint64_t layer_macs(const LayerSpec& layer, Shape input);

bool in_scope(const LayerSpec& layer, FlopsScope scope);

struct LayerCost {
  std::string name;
  std::string kind;
  std::uint64_t macs = 0;
  int in_channels = 0;
  int out_channels = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::uint64_t total = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

CostReport cost_report(const Network& net, FlopsScope scope = FlopsScope::kAll);

/// Total MACs original / pruned over the chosen layer scope.
double speedup(const Network& original, const Network& pruned, FlopsScope scope = FlopsScope::kAll);

struct ChannelCounts {
  int in = 0;
  int out = 0;
};

/// Combined filter + channel sparsity per layer: 1 - (c' n') / (c n).
std::vector<double> sparsity_report(const std::vector<ChannelCounts>& original,
                                    const std::vector<ChannelCounts>& pruned);

/// Percentage rounded to one decimal, as displayed in reports.
double display_percent(double fraction);

struct EvalResult {
  double loss = 0.0;      // mean softmax cross-entropy
  double accuracy = 0.0;  // top-1
  int samples = 0;
};

/// Single-view evaluation, sharded over LDRF_THREADS workers with results
/// reduced in sample order.
EvalResult evaluate(const Network& net, const Dataset& data, int threads = 0);

}  // namespace ldrf
