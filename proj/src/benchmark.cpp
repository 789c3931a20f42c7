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

#include "ldrf/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldrf/decompose.hpp"
#include "ldrf/error.hpp"
#include "ldrf/metrics.hpp"
#include "ldrf/recompose.hpp"
#include "ldrf/reconstruct.hpp"

namespace ldrf {

namespace {

struct Blob {
  double cy = 0.0, cx = 0.0, sigma = 1.0;
  std::vector<double> amp;
};

Blob random_blob(std::mt19937_64& rng, Shape s, double amp_scale) {
  std::uniform_real_distribution<double> uy(1.0, s.h - 2.0), ux(1.0, s.w - 2.0), us(1.0, 2.5), ua(-1.0, 1.0);
  Blob b;
  b.cy = uy(rng);
  b.cx = ux(rng);
  b.sigma = us(rng);
  b.amp.resize(s.c);
  for (auto& a : b.amp) a = amp_scale * ua(rng);
  return b;
}

void splat(float* img, Shape s, const Blob& b, double dy, double dx, double scale) {
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const double ry = y - (b.cy + dy), rx = x - (b.cx + dx);
      const double g = scale * std::exp(-(ry * ry + rx * rx) * inv);
      for (int c = 0; c < s.c; ++c) img[(static_cast<std::size_t>(c) * s.h + y) * s.w + x] += static_cast<float>(b.amp[c] * g);
    }
}

void he_init(LayerSpec& l, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(l.fan_in())));
  for (auto& w : l.weights) w = static_cast<float>(nd(rng));
  std::fill(l.bias.begin(), l.bias.end(), 0.0f);
}

}  // namespace

nlohmann::json SyntheticSpec::to_json() const {
  return {{"samples", samples}, {"classes", classes}, {"shape", {shape.c, shape.h, shape.w}},
          {"noise", noise},     {"separation", separation}, {"seed", seed}};
}

Dataset gen_synthetic(const SyntheticSpec& synth) {
  require(synth.classes >= 2, "synthetic data needs at least 2 classes");
  require(synth.samples >= synth.classes, "synthetic data needs at least one sample per class");
  require(synth.shape.c >= 1 && synth.shape.h >= 4 && synth.shape.w >= 4, "synthetic image shape must be at least 1x4x4");
  require(synth.noise >= 0.0 && synth.separation > 0.0, "synthetic noise must be >= 0 and separation > 0");
  std::mt19937_64 rng(synth.seed);
  std::vector<std::vector<Blob>> protos(synth.classes);
  for (auto& p : protos)
    for (int i = 0; i < 3; ++i) p.push_back(random_blob(rng, synth.shape, synth.separation));

  Dataset ds;
  ds.num_classes = static_cast<std::uint32_t>(synth.classes);
  ds.labels.resize(synth.samples);
  for (int i = 0; i < synth.samples; ++i) ds.labels[i] = static_cast<std::uint32_t>(i % synth.classes);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

  ds.images = Tensor4(synth.samples, synth.shape.c, synth.shape.h, synth.shape.w);
  std::uniform_int_distribution<int> jitter(-2, 2);
  std::uniform_real_distribution<double> amp(0.7, 1.3);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < synth.samples; ++i) {
    float* img = ds.images.sample(i).data();
    for (const Blob& b : protos[ds.labels[i]]) splat(img, synth.shape, b, jitter(rng), jitter(rng), amp(rng));
    splat(img, synth.shape, random_blob(rng, synth.shape, 0.8), 0.0, 0.0, 1.0);
    for (std::size_t p = 0; p < synth.shape.count(); ++p) img[p] += static_cast<float>(synth.noise * noise(rng));
  }
  return ds;
}

Network make_toy_net(std::uint64_t seed, int classes, Shape input) {
  require(input.h % 4 == 0 && input.w % 4 == 0, "toy net input size must be divisible by 4");
  Network net;
  net.name = "toy";
  net.input = input;
  net.layers = {make_conv("conv1", input.c, 16, 3, 1, 1, true),
                make_maxpool("pool1", 2, 2),
                make_conv("conv2", 16, 32, 3, 1, 1, true),
                make_maxpool("pool2", 2, 2),
                make_conv("conv3", 32, 32, 3, 1, 1, true),
                make_dense("fc", 32 * (input.h / 4) * (input.w / 4), classes, false),
                make_softmax("prob")};
  std::mt19937_64 rng(seed);
  for (auto& l : net.layers)
    if (l.is_linear()) he_init(l, rng);
  net.info["init_seed"] = seed;
  net.validate();
  return net;
}

Network vgg9_network(const std::vector<int>& keeps) {
  require(keeps.empty() || keeps.size() == 6, "VGG-9 takes six conv keep counts");
  const int full[6] = {64, 64, 128, 128, 256, 256};
  int ch[6];
  for (int i = 0; i < 6; ++i) {
    ch[i] = keeps.empty() ? full[i] : keeps[i];
    require(ch[i] >= 1 && ch[i] <= full[i], "VGG-9 keep count out of range");
  }
  const char* names[6] = {"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2"};
  Network net;
  net.name = "vgg9";
  net.input = {3, 32, 32};
  int in = 3;
  for (int i = 0; i < 6; ++i) {
    net.layers.push_back(make_conv(names[i], in, ch[i], 3, 1, 1, true));
    in = ch[i];
    if (i % 2 == 1) net.layers.push_back(make_maxpool("pool" + std::to_string(i / 2 + 1), 2, 2));
  }
  net.layers.push_back(make_dense("fc1", in * 4 * 4, 512, true));
  net.layers.push_back(make_dense("fc2", 512, 512, true));
  net.layers.push_back(make_dense("fc3", 512, 10, false));
  net.layers.push_back(make_softmax("prob"));
  net.validate();
  return net;
}

OptimSettings ToyBenchmark::default_recon() { return default_recon_optim(); }

nlohmann::json ToyBenchmark::to_json() const {
  return {{"train_samples", train_samples},
          {"test_samples", test_samples},
          {"classes", classes},
          {"noise", noise},
          {"train_epochs", train_epochs},
          {"train_lr", train_lr},
          {"energy", energy},
          {"classifier_energy", classifier_energy},
          {"decompose_finetune_iters", decompose_finetune_iters},
          {"decompose_finetune_lr", decompose_finetune_lr},
          {"keep_ratio", keep_ratio},
          {"recon", {{"lr", recon.lr}, {"momentum", recon.momentum}, {"iters", recon.iters}, {"batch", recon.batch}}},
          {"finetune_iters", finetune_iters},
          {"finetune_lr", finetune_lr}};
}

ToyRun train_toy(const ToyBenchmark& bench, std::uint64_t seed) {
  SyntheticSpec synth;
  synth.samples = bench.train_samples + bench.test_samples;
  synth.classes = bench.classes;
  synth.noise = bench.noise;
  synth.seed = seed;
  const Dataset all = gen_synthetic(synth);
  ToyRun run;
  run.train = all.subset(0, bench.train_samples);
  run.test = all.subset(bench.train_samples, bench.test_samples);
  run.net = make_toy_net(seed + 17, bench.classes, synth.shape);
  OptimSettings os;
  os.lr = bench.train_lr;
  os.seed = seed + 29;
  os.iters = bench.train_epochs * std::max(1, bench.train_samples / os.batch);
  os.weight_decay = 1e-4;
  train_classifier(run.net, run.train.images, run.train.labels, os);
  run.net.info["train"] = {{"seed", seed}, {"benchmark", bench.to_json()}};
  run.accuracy = evaluate(run.net, run.test).accuracy;
  return run;
}

PruneConfig keep_ratio_config(const Network& decomposed, double ratio, double energy, Criterion criterion,
                              std::uint64_t seed) {
  require(ratio > 0.0 && ratio <= 1.0, "keep ratio must lie in (0, 1]");
  PruneConfig cfg;
  cfg.energy = energy;
  cfg.criterion = criterion;
  cfg.seed = seed;
  const auto pairs = decomposed_pairs(decomposed);
  for (std::size_t i = 0; i + 1 < pairs.size(); ++i) {
    const LayerSpec& e = decomposed.layers[pairs[i].first];
    const LayerSpec& t = decomposed.layers[pairs[i].second];
    int k = static_cast<int>(std::lround(ratio * t.out));
    k = std::min(t.out, std::max(k, e.out + 1));
    cfg.layers.push_back({t.name.substr(0, t.name.size() - 2), k});
  }
  return cfg;
}

PreparedToy prepare_toy(const ToyBenchmark& bench, std::uint64_t seed) {
  PreparedToy prep;
  prep.run = train_toy(bench, seed);
  prep.source = prep.run.net;
  DecomposeOptions dopt;
  dopt.classifier_energy = bench.classifier_energy;
  dopt.finetune_iters = bench.decompose_finetune_iters;
  dopt.finetune.lr = bench.decompose_finetune_lr;
  dopt.finetune.seed = seed + 37;
  prep.decomposed = decompose_network(prep.run.net, bench.energy, prep.run.train, dopt).net;
  if (bench.decompose_finetune_iters > 0) {
    OptimSettings ft = dopt.finetune;
    ft.iters = bench.decompose_finetune_iters;
    train_classifier(prep.source, prep.run.train.images, prep.run.train.labels, ft);
  }
  prep.reference_accuracy = evaluate(prep.source, prep.run.test).accuracy;
  prep.decomposed_accuracy = evaluate(prep.decomposed, prep.run.test).accuracy;
  return prep;
}

namespace {

MethodOutcome measure(const ToyBenchmark& bench, const PreparedToy& prep, const Network& pruned, std::uint64_t seed) {
  MethodOutcome m;
  m.slim = strip_pruned(pruned);
  const EvalResult pre = evaluate(m.slim, prep.run.test);
  m.pre_ft_accuracy = m.post_ft_accuracy = pre.accuracy;
  m.pre_ft_loss = m.post_ft_loss = pre.loss;
  if (bench.finetune_iters > 0) {
    OptimSettings ft;
    ft.iters = bench.finetune_iters;
    ft.lr = bench.finetune_lr;
    ft.seed = seed + 41;
    finetune_network(m.slim, prep.run.train, ft);
    const EvalResult post = evaluate(m.slim, prep.run.test);
    m.post_ft_accuracy = post.accuracy;
    m.post_ft_loss = post.loss;
  }
  return m;
}

PruneConfig bench_config(const ToyBenchmark& bench, const PreparedToy& prep, Criterion criterion, std::uint64_t seed) {
  PruneConfig cfg = keep_ratio_config(prep.decomposed, bench.keep_ratio, bench.energy, criterion, seed);
  cfg.optim = bench.recon;
  cfg.optim.seed = seed;
  return cfg;
}

}  // namespace

MethodOutcome run_ldrf(const ToyBenchmark& bench, const PreparedToy& prep, Criterion criterion, std::uint64_t seed) {
  const PruneConfig cfg = bench_config(bench, prep, criterion, seed);
  return measure(bench, prep, ldrf_prune_network(prep.decomposed, cfg, prep.run.train).net, seed);
}

MethodOutcome run_baseline(const ToyBenchmark& bench, const PreparedToy& prep, Criterion criterion,
                           std::uint64_t seed) {
  const PruneConfig cfg = bench_config(bench, prep, criterion, seed);
  return measure(bench, prep, baseline_prune_network(prep.source, cfg, prep.run.train).net, seed);
}

PairedOutcome run_paired(const ToyBenchmark& bench, std::uint64_t seed, Criterion criterion_ldrf,
                         Criterion criterion_baseline) {
  const PreparedToy prep = prepare_toy(bench, seed);
  PairedOutcome out;
  out.seed = seed;
  out.reference_accuracy = prep.reference_accuracy;
  out.ldrf = run_ldrf(bench, prep, criterion_ldrf, seed);
  out.baseline = run_baseline(bench, prep, criterion_baseline, seed);
  return out;
}

}  // namespace ldrf
