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
#include <vector>

#include <nlohmann/json.hpp>

#include "ldrf/io.hpp"
#include "ldrf/network.hpp"
#include "ldrf/pruner.hpp"
#include "ldrf/train.hpp"

namespace ldrf {

struct SyntheticSpec {
  int samples = 1024;
  int classes = 4;
  Shape shape{3, 16, 16};
  double noise = 0.35;       // std-dev of additive pixel noise
  double separation = 1.0;   // scale of the class-specific blobs
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Class-conditional Gaussian-blob images. Each class owns three blobs with
/// a fixed center, width and per-channel amplitude; every sample jitters the
/// blobs by up to two pixels, rescales them, adds one random distractor blob
/// and pixel noise. Labels are balanced and shuffled.
Dataset gen_synthetic(const SyntheticSpec& synth);

/// conv 3->16, pool, conv 16->32, pool, conv 32->32, dense -> classes,
/// softmax, He-initialized from `seed`.
Network make_toy_net(std::uint64_t seed, int classes = 4, Shape input = {3, 16, 16});

/// VGG-9 for 32 x 32 inputs: (2 x 64C3)-MP2-(2 x 128C3)-MP2-(2 x 256C3)-MP2-
/// (2 x 512FC)-10FC-Softmax. `keeps` (six entries, empty for none) sets the
/// surviving output channels of the six conv layers. Weights are zero.
Network vgg9_network(const std::vector<int>& keeps = {});

/// Settings of the paired LDRF-vs-baseline experiment on the toy benchmark.
struct ToyBenchmark {
  int train_samples = 1024;
  int test_samples = 2048;
  int classes = 4;
  double noise = 0.9;
  int train_epochs = 16;
  double train_lr = 0.01;
  double energy = 0.5;
  double classifier_energy = 1.0;
  int decompose_finetune_iters = 300;  // also applied to the plain source network
  double decompose_finetune_lr = 0.002;
  double keep_ratio = 0.5;
  OptimSettings recon = default_recon();
  int finetune_iters = 0;  // end-to-end fine-tune after pruning, 0 skips
  double finetune_lr = 0.003;

  static OptimSettings default_recon();
  nlohmann::json to_json() const;
};

struct ToyRun {
  Network net;  // trained plain network
  Dataset train;
  Dataset test;
  double accuracy = 0.0;
};

ToyRun train_toy(const ToyBenchmark& bench, std::uint64_t seed);

/// A trained toy network ready for pruning: `source` is the plain network the
/// baseline prunes and `decomposed` its decomposition. Both received the same
/// stage-1 fine-tuning budget.
struct PreparedToy {
  ToyRun run;
  Network source;
  Network decomposed;
  double reference_accuracy = 0.0;
  double decomposed_accuracy = 0.0;
};

PreparedToy prepare_toy(const ToyBenchmark& bench, std::uint64_t seed);

/// Keep counts for every prunable layer at `ratio` of its outputs, raised to
/// z + 1 where the rank requires it.
PruneConfig keep_ratio_config(const Network& decomposed, double ratio, double energy, Criterion criterion,
                              std::uint64_t seed);

struct MethodOutcome {
  double pre_ft_accuracy = 0.0;
  double pre_ft_loss = 0.0;
  double post_ft_accuracy = 0.0;
  double post_ft_loss = 0.0;
  Network slim;
};

MethodOutcome run_ldrf(const ToyBenchmark& bench, const PreparedToy& prep, Criterion criterion, std::uint64_t seed);
MethodOutcome run_baseline(const ToyBenchmark& bench, const PreparedToy& prep, Criterion criterion,
                           std::uint64_t seed);

struct PairedOutcome {
  std::uint64_t seed = 0;
  double reference_accuracy = 0.0;
  MethodOutcome ldrf;
  MethodOutcome baseline;
};

/// Trains a toy network for `seed` and prunes it with both methods at the
/// same keep counts.
PairedOutcome run_paired(const ToyBenchmark& bench, std::uint64_t seed, Criterion criterion_ldrf = Criterion::kTopK,
                         Criterion criterion_baseline = Criterion::kTopK);

}  // namespace ldrf
