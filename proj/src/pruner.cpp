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

#include "ldrf/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldrf/error.hpp"

namespace ldrf {

Criterion criterion_from_string(const std::string& s) {
  for (Criterion c : kAllCriteria)
    if (s == to_string(c)) return c;
  throw_invalid("unknown selection criterion '" + s + "' (expected topk, random, apoz, activation or weight)");
}

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::kTopK: return "topk";
    case Criterion::kRandom: return "random";
    case Criterion::kApoz: return "apoz";
    case Criterion::kActivation: return "activation";
    case Criterion::kWeight: return "weight";
  }
  return "?";
}

std::string ValidRange::to_string() const { return "(" + std::to_string(z) + ", " + std::to_string(n) + "]"; }

ValidRange valid_range(int z, int n) {
  if (z < 0 || z > n)
    throw Error(ErrorCode::kInvariantViolation,
                "rank " + std::to_string(z) + " exceeds neuron count " + std::to_string(n));
  return {z, n};
}

OptimSettings default_recon_optim() {
  OptimSettings os;
  os.lr = 0.1;
  os.iters = 400;
  return os;
}

int PruneConfig::keep_for(const std::string& name, int n) const {
  for (const auto& l : layers)
    if (l.name == name) return l.keep;
  return n;
}

nlohmann::json PruneConfig::to_json() const {
  nlohmann::json j;
  j["energy"] = energy;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) arr.push_back({{"name", l.name}, {"keep", l.keep}});
  j["layers"] = std::move(arr);
  j["criterion"] = to_string(criterion);
  j["optim"] = {{"lr", optim.lr}, {"momentum", optim.momentum}, {"iters", optim.iters}, {"batch", optim.batch}};
  j["seed"] = seed;
  return j;
}

PruneConfig PruneConfig::from_json(const nlohmann::json& j) {
  PruneConfig cfg;
  try {
    cfg.energy = j.value("energy", cfg.energy);
    if (j.contains("layers"))
      for (const auto& l : j.at("layers")) cfg.layers.push_back({l.at("name").get<std::string>(), l.at("keep").get<int>()});
    if (j.contains("criterion")) cfg.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    if (j.contains("optim")) {
      const auto& o = j.at("optim");
      cfg.optim.lr = o.value("lr", cfg.optim.lr);
      cfg.optim.momentum = o.value("momentum", cfg.optim.momentum);
      cfg.optim.iters = o.value("iters", cfg.optim.iters);
      cfg.optim.batch = o.value("batch", cfg.optim.batch);
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed prune config: ") + e.what());
  }
  require(cfg.energy > 0.0 && cfg.energy <= 1.0, "prune config: energy must lie in (0, 1]");
  require(cfg.optim.batch >= 1 && cfg.optim.iters >= 0 && cfg.optim.lr >= 0.0, "prune config: invalid optim settings");
  cfg.optim.seed = cfg.seed;
  return cfg;
}

std::vector<Violation> validate_config(const PruneConfig& cfg, const RankReport& report) {
  std::vector<Violation> out;
  for (const auto& l : cfg.layers) {
    const RankEntry* entry = nullptr;
    for (const auto& e : report.layers)
      if (e.name == l.name) entry = &e;
    if (!entry) {
      out.push_back({l.name, l.keep, 0, 0, "layer '" + l.name + "' does not exist in the network"});
      continue;
    }
    const ValidRange range = valid_range(entry->z, entry->n);
    if (!range.contains(l.keep)) {
      out.push_back({l.name, l.keep, entry->z, entry->n,
                     "layer '" + l.name + "': keep count " + std::to_string(l.keep) + " lies outside the valid range " +
                         range.to_string() + "; at least z+1 = " + std::to_string(entry->z + 1) +
                         " neurons must survive to carry the rank-" + std::to_string(entry->z) + " embedding"});
    }
  }
  return out;
}

std::vector<double> score_neurons(Criterion criterion, const Matrix& filter_weights, const Tensor4* activations,
                                  std::uint64_t seed) {
  const std::size_t n = filter_weights.cols();
  std::vector<double> scores(n, 0.0);
  const bool needs_data = criterion == Criterion::kApoz || criterion == Criterion::kActivation;
  if (needs_data) {
    require(activations != nullptr && activations->n() > 0,
            std::string("criterion '") + to_string(criterion) + "' needs captured activations");
    require(static_cast<std::size_t>(activations->c()) == n, "score_neurons: activation channels != filter count");
  }
  switch (criterion) {
    case Criterion::kTopK:
      for (std::size_t j = 0; j < n; ++j) scores[j] = static_cast<double>(n - j);
      break;
    case Criterion::kRandom: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& s : scores) s = u(rng);
      break;
    }
    case Criterion::kWeight:
      for (std::size_t r = 0; r < filter_weights.rows(); ++r)
        for (std::size_t j = 0; j < n; ++j) scores[j] += std::abs(filter_weights(r, j));
      break;
    case Criterion::kActivation:
    case Criterion::kApoz: {
      const Tensor4& a = *activations;
      const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
      const double count = static_cast<double>(a.n()) * plane;
      for (int b = 0; b < a.n(); ++b)
        for (std::size_t j = 0; j < n; ++j) {
          const float* p = a.data().data() + (static_cast<std::size_t>(b) * n + j) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            if (criterion == Criterion::kActivation)
              scores[j] += std::abs(p[i]);
            else if (p[i] <= 0.0f)
              scores[j] += 1.0;
          }
        }
      for (auto& s : scores) s = criterion == Criterion::kActivation ? s / count : -s / count;
      break;
    }
  }
  return scores;
}

Mask build_mask(const std::vector<double>& scores, int k) {
  const int n = static_cast<int>(scores.size());
  require(k >= 1 && k <= n, "build_mask: keep count " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  Mask m(n, 0);
  for (int i = 0; i < k; ++i) m[order[i]] = 1;
  return m;
}

int popcount(const Mask& m) { return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1})); }

}  // namespace ldrf
