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

#include "ldrf/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldrf/decompose.hpp"
#include "ldrf/error.hpp"

namespace ldrf {

namespace {

constexpr int kChunk = 256;
constexpr int kScoreSamples = 512;
constexpr double kDivergenceFactor = 10.0;
constexpr int kDivergencePatience = 3;

Tensor4 run_path(const std::vector<LayerSpec>& path, const Tensor4& x, const Mask& mask) {
  Tensor4 cur = x;
  for (std::size_t i = 0; i < path.size(); ++i) {
    cur = apply_layer(path[i], cur);
    if (i == 0 && !mask.empty()) {
      const std::size_t plane = static_cast<std::size_t>(cur.h()) * cur.w();
      for (int b = 0; b < cur.n(); ++b)
        for (int c = 0; c < cur.c(); ++c)
          if (!mask[c]) std::fill_n(cur.data().begin() + (static_cast<std::size_t>(b) * cur.c() + c) * plane, plane, 0.0f);
    }
  }
  return cur;
}

// Layers [first, last) of `net` applied in chunks to bound im2col memory.
Tensor4 forward_range_chunked(const Network& net, const Tensor4& x, std::size_t first, std::size_t last) {
  std::vector<Tensor4> parts;
  for (int b = 0; b < x.n(); b += kChunk) parts.push_back(forward_range(net, x.slice(b, std::min(kChunk, x.n() - b)), first, last));
  return concat_samples(parts);
}

double squared_error(const Tensor4& out, const Tensor4& target, std::size_t begin) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = static_cast<double>(out.data()[i]) - target.data()[begin + i];
    acc += d * d;
  }
  return acc;
}

void check_problem(const ReconProblem& p) {
  require(!p.path.empty(), "reconstruction path is empty");
  require(p.input.n() > 0, "reconstruction batch is empty");
  require(p.input.n() == p.target.n(), "reconstruction input and target sample counts differ");
  require(p.mask.empty() || p.mask.size() == static_cast<std::size_t>(p.path.front().out),
          "reconstruction mask length does not match layer " + p.path.front().name);
}

std::vector<int> all_samples(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void zero_masked_outputs(LayerSpec& layer, const Mask& mask) {
  if (layer.bias.empty()) layer.bias.assign(layer.out, 0.0f);
  const std::size_t rows = layer.fan_in();
  for (int j = 0; j < layer.out; ++j) {
    if (mask[j]) continue;
    for (std::size_t r = 0; r < rows; ++r) layer.weights[r * layer.out + j] = 0.0f;
    layer.bias[j] = 0.0f;
  }
}

std::string base_name(const std::string& s) {
  return s.size() > 2 && s.compare(s.size() - 2, 2, ".q") == 0 ? s.substr(0, s.size() - 2) : s;
}

int default_iters(int samples, int batch) { return 2 * std::max(1, (samples + batch - 1) / batch); }

struct DivergenceWatch {
  std::string layer;
  double init = 0.0;
  int strikes = 0;

  void observe(double loss, int iter) {
    const bool bad = !std::isfinite(loss) || (init > 0.0 && loss > kDivergenceFactor * init);
    strikes = bad ? strikes + 1 : 0;
    if (strikes >= kDivergencePatience)
      throw DivergenceError(layer, "loss " + std::to_string(loss) + " exceeded " +
                                       std::to_string(kDivergenceFactor) + "x the initial loss " + std::to_string(init) +
                                       " for " + std::to_string(kDivergencePatience) +
                                       " consecutive evaluations (iteration " + std::to_string(iter) + ")");
  }
};

void require_finite(const LayerSpec& l, const std::string& layer, int iter) {
  const auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(l.weights.begin(), l.weights.end(), finite) || !std::all_of(l.bias.begin(), l.bias.end(), finite))
    throw DivergenceError(layer, "parameters of " + l.name + " became non-finite at iteration " + std::to_string(iter));
}

// Curvature scale of each trainable factor: mean squared norm (plus one for
// the bias) of the rows it multiplies, times a bound on the gain of the
// linear layers after it. Measured on a leading sample of the problem input.
std::map<std::size_t, double> input_energy(const ReconProblem& p) {
  const std::vector<bool> trainable = recon_trainable(p.path);
  std::map<std::size_t, double> out;
  Tensor4 cur = p.input.slice(0, std::min(kScoreSamples, p.input.n()));
  for (std::size_t i = 0; i < p.path.size(); ++i) {
    const LayerSpec& l = p.path[i];
    if (trainable[i]) {
      const Matrix rows = l.is_dense_style() ? Matrix(static_cast<std::size_t>(cur.n()), cur.sample_size(), cur.data())
                                             : im2col(cur, l.k, l.pad, l.stride);
      double acc = 0.0;
      for (float v : rows.data()) acc += static_cast<double>(v) * v;
      double gain = 1.0;
      for (std::size_t j = i + 1; j < p.path.size(); ++j) {
        const LayerSpec& d = p.path[j];
        if (!d.is_linear()) continue;
        const double smax = svd(d.weight_matrix()).s.front();
        gain *= std::max(1.0, (d.is_dense_style() ? 1.0 : d.k * d.k) * smax * smax);
      }
      out[i] = (1.0 + acc / static_cast<double>(rows.rows())) * gain;
    }
    cur = run_path({l}, cur, i == 0 ? p.mask : Mask{});
  }
  return out;
}

}  // namespace

std::vector<bool> recon_trainable(const std::vector<LayerSpec>& path) {
  std::vector<bool> t(path.size(), false);
  std::size_t first = path.size(), last = path.size();
  for (std::size_t i = 0; i < path.size(); ++i)
    if (path[i].is_linear()) {
      if (first == path.size()) first = i;
      last = i;
    }
  if (first < path.size()) {
    t[first] = true;
    t[last] = true;
  }
  return t;
}

double recon_loss(const ReconProblem& p, const std::vector<int>& samples_in) {
  check_problem(p);
  const std::vector<int> samples = samples_in.empty() ? all_samples(p.input.n()) : samples_in;
  require(!samples.empty(), "reconstruction batch is empty");
  const std::size_t per = p.target.sample_size();
  double acc = 0.0;
  for (std::size_t b = 0; b < samples.size(); b += kChunk) {
    const std::size_t cnt = std::min<std::size_t>(kChunk, samples.size() - b);
    const std::span<const int> idx(samples.data() + b, cnt);
    const Tensor4 out = run_path(p.path, p.input.gather(idx), p.mask);
    require(out.sample_size() == per, "reconstruction output shape does not match the target");
    const Tensor4 tgt = p.target.gather(idx);
    acc += squared_error(out, tgt, 0);
  }
  const double positions = static_cast<double>(samples.size()) * p.target.h() * p.target.w();
  return acc / positions;
}

ReconGrad recon_grad(const ReconProblem& p, const std::vector<int>& samples_in) {
  check_problem(p);
  const std::vector<int> samples = samples_in.empty() ? all_samples(p.input.n()) : samples_in;
  require(!samples.empty(), "reconstruction batch is empty");
  const Tensor4 x = p.input.gather(samples);
  const Tensor4 tgt = p.target.gather(samples);
  Tape tape;
  std::map<std::size_t, Mask> masks;
  if (!p.mask.empty()) masks.emplace(0, p.mask);
  const Tensor4 out = tape.forward(p.path, x, masks);
  require(out.size() == tgt.size(), "reconstruction output shape does not match the target");
  const double positions = static_cast<double>(samples.size()) * tgt.h() * tgt.w();
  ReconGrad g;
  Tensor4 dout(out.n(), out.c(), out.h(), out.w());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = static_cast<double>(out.data()[i]) - tgt.data()[i];
    g.loss += d * d;
    dout.data()[i] = static_cast<float>(2.0 * d / positions);
  }
  g.loss /= positions;
  g.grads = tape.backward(p.path, dout, recon_trainable(p.path));
  return g;
}

OptimizeResult optimize_layer(const ReconProblem& p, const OptimSettings& settings) {
  check_problem(p);
  require(settings.batch >= 1 && settings.lr >= 0.0, "optimize_layer: invalid optimizer settings");
  const int n = p.input.n();
  const int iters = settings.iters > 0 ? settings.iters : default_iters(n, settings.batch);
  const int eval_every = std::max(1, iters / 8);
  const std::vector<bool> trainable = recon_trainable(p.path);

  ReconProblem work = p;
  OptimizeResult res;
  res.init_loss = recon_loss(work);
  res.history.push_back(res.init_loss);
  res.path = p.path;
  double best = res.init_loss;
  DivergenceWatch watch{p.layer, res.init_loss, 0};

  SgdMomentum opt(settings, iters);
  for (const auto& [slot, m] : input_energy(p)) opt.set_scale(slot, 1.0 / m);
  BatchSampler sampler(n, settings.batch, settings.seed);
  for (int it = 0; it < iters; ++it) {
    const ReconGrad g = recon_grad(work, sampler.next());
    for (std::size_t i = 0; i < work.path.size(); ++i)
      if (trainable[i]) {
        opt.step(i, work.path[i], g.grads[i], it);
        require_finite(work.path[i], p.layer, it + 1);
      }
    if ((it + 1) % eval_every == 0 || it + 1 == iters) {
      const double loss = recon_loss(work);
      res.history.push_back(loss);
      if (loss < best) {
        best = loss;
        res.path = work.path;
      }
      watch.observe(loss, it + 1);
    }
  }
  res.final_loss = best;
  res.iters = iters;
  return res;
}

TrainReport train_final_layer(LayerSpec& layer, const Tensor4& embeddings, const std::vector<std::uint32_t>& labels,
                              const OptimSettings& settings) {
  require(layer.is_linear(), "train_final_layer: layer " + layer.name + " is not linear");
  require(embeddings.n() > 0 && static_cast<std::size_t>(embeddings.n()) == labels.size(),
          "train_final_layer: sample/label count mismatch");
  const std::vector<LayerSpec> probe{layer};
  const auto logits_of = [&](const std::vector<LayerSpec>& ls, const Tensor4& x) {
    Tensor4 out = apply_layer(ls[0], x);
    require(out.h() == 1 && out.w() == 1, "train_final_layer: classifier output must be 1 x 1 spatially");
    return Matrix(static_cast<std::size_t>(out.n()), out.sample_size(), std::move(out.data()));
  };
  for (std::uint32_t y : labels) require(y < static_cast<std::uint32_t>(layer.out), "train_final_layer: label out of range");

  const int n = embeddings.n();
  const int iters = settings.iters > 0 ? settings.iters : default_iters(n, settings.batch);
  const int eval_every = std::max(1, iters / 8);
  std::vector<LayerSpec> work{layer};
  TrainReport rep;
  rep.init_loss = softmax_cross_entropy(logits_of(work, embeddings), labels);
  rep.history.push_back(rep.init_loss);
  double best = rep.init_loss;
  LayerSpec best_layer = layer;
  DivergenceWatch watch{layer.name, rep.init_loss, 0};

  SgdMomentum opt(settings, iters);
  BatchSampler sampler(n, settings.batch, settings.seed);
  Tape tape;
  for (int it = 0; it < iters; ++it) {
    const auto idx = sampler.next();
    const Tensor4 xb = embeddings.gather(idx);
    std::vector<std::uint32_t> yb(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = labels[idx[i]];
    const Tensor4 out = tape.forward(work, xb);
    Matrix dlogits;
    softmax_cross_entropy(Matrix(static_cast<std::size_t>(out.n()), out.sample_size(), out.data()), yb, &dlogits);
    const auto grads = tape.backward(work, Tensor4(out.n(), out.c(), out.h(), out.w(), std::move(dlogits.data())), {true});
    opt.step(0, work[0], grads[0], it);
    require_finite(work[0], layer.name, it + 1);
    if ((it + 1) % eval_every == 0 || it + 1 == iters) {
      const double loss = softmax_cross_entropy(logits_of(work, embeddings), labels);
      rep.history.push_back(loss);
      if (loss < best) {
        best = loss;
        best_layer = work[0];
      }
      watch.observe(loss, it + 1);
    }
  }
  layer = best_layer;
  rep.final_loss = best;
  rep.iters = iters;
  return rep;
}

nlohmann::json LayerLoss::to_json() const {
  return {{"layer", layer}, {"k", k}, {"z", z}, {"init_loss", init_loss}, {"final_loss", final_loss}, {"iters", iters}};
}

nlohmann::json PruneResult::report_json(const PruneConfig& cfg) const {
  nlohmann::json j;
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["config"] = cfg.to_json();
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : losses) arr.push_back(l.to_json());
  j["layers"] = std::move(arr);
  j["final_layer"] = {{"init_loss", final_layer.init_loss},
                      {"final_loss", final_layer.final_loss},
                      {"iters", final_layer.iters}};
  return j;
}

PruneResult ldrf_prune_network(const Network& decomposed, const PruneConfig& cfg, const Dataset& data,
                               std::vector<LayerLoss>* progress) {
  require(decomposed.form == NetForm::kDecomposed, "LDRF pruning needs a decomposed network (run decompose first)");
  require(data.size() > 0, "LDRF pruning: empty dataset");
  require(data.images.sample_shape() == decomposed.input, "LDRF pruning: data shape does not match network input");
  decomposed.validate();
  const auto pairs = decomposed_pairs(decomposed);
  require(!pairs.empty(), "LDRF pruning: network has no decomposed layers");
  require(pairs.back().second == decomposed.logits_layer(), "LDRF pruning: last decomposed layer must be the classifier");

  for (const auto& l : cfg.layers) {
    bool found = false;
    for (std::size_t i = 0; i + 1 < pairs.size(); ++i)
      found = found || base_name(decomposed.layers[pairs[i].first].name) == l.name;
    require(found, "prune config names layer '" + l.name + "', which is not a prunable decomposed layer");
  }

  const Network teacher = decomposed;
  PruneResult res;
  res.net = decomposed;
  Network& student = res.net;
  student.masks.clear();
  const Tensor4& x = data.images;
  bool pruned = false;

  for (std::size_t li = 0; li + 1 < pairs.size(); ++li) {
    const auto [e, t] = pairs[li];
    const std::size_t next_e = pairs[li + 1].first;
    const std::string name = base_name(student.layers[e].name);
    const int n = student.layers[t].out;
    const int z = student.layers[e].out;
    const int k = cfg.keep_for(name, n);
    const ValidRange range = valid_range(z, n);
    require(range.contains(k), "layer '" + name + "': keep count " + std::to_string(k) +
                                   " lies outside the valid range " + range.to_string());

    ReconProblem p;
    p.layer = name;
    p.input = forward_range_chunked(student, x, 0, e + 1);
    p.target = forward_range_chunked(teacher, x, 0, next_e + 1);
    p.path.assign(student.layers.begin() + static_cast<std::ptrdiff_t>(t),
                  student.layers.begin() + static_cast<std::ptrdiff_t>(next_e + 1));

    if (k < n) {
      const DecomposedLayer d = DecomposedLayer::from_layers(student.layers[e], student.layers[t]);
      const Tensor4 acts = apply_layer(student.layers[t], p.input.slice(0, std::min(kScoreSamples, p.input.n())));
      p.mask = build_mask(score_neurons(cfg.criterion, matmul(d.q, d.r), &acts, cfg.seed + li), k);
      pruned = true;
    } else {
      p.mask.assign(n, 1);
    }

    OptimSettings os = cfg.optim;
    os.seed = cfg.seed + 1000 + li;
    OptimizeResult opt = optimize_layer(p, os);
    zero_masked_outputs(opt.path.front(), p.mask);
    std::copy(opt.path.begin(), opt.path.end(), student.layers.begin() + static_cast<std::ptrdiff_t>(t));
    student.masks[name] = p.mask;

    LayerLoss ll{name, k, z, opt.init_loss, opt.final_loss, opt.iters};
    res.losses.push_back(ll);
    if (progress) progress->push_back(ll);
  }

  if (pruned) {
    const auto [e, t] = pairs.back();
    const Tensor4 emb = forward_range_chunked(student, x, 0, e + 1);
    OptimSettings os = cfg.optim;
    os.seed = cfg.seed + 2000;
    res.final_layer = train_final_layer(student.layers[t], emb, data.labels, os);
  }
  student.info["prune"] = cfg.to_json();
  student.info["method"] = "ldrf";
  return res;
}

LayerSpec baseline_prune_layer(const LayerSpec& layer, const Mask& survivors, const Tensor4& input,
                               const Tensor4& target, std::uint64_t seed, std::size_t max_rows) {
  require(layer.is_linear(), "baseline_prune_layer: layer " + layer.name + " is not linear");
  require(survivors.size() == static_cast<std::size_t>(input.c()),
          "baseline_prune_layer: survivor mask length does not match input channels");
  require(popcount(survivors) > 0, "baseline_prune_layer: survivor set is empty");
  require(input.n() == target.n() && target.c() == layer.out, "baseline_prune_layer: target shape mismatch");
  require(max_rows >= 1, "baseline_prune_layer: max_rows must be positive");

  const bool dense = layer.is_dense_style();
  const Matrix cols = dense ? Matrix(static_cast<std::size_t>(input.n()), input.sample_size(), input.data())
                            : im2col(input, layer.k, layer.pad, layer.stride);
  const std::size_t block = dense ? static_cast<std::size_t>(input.h()) * input.w()
                                  : static_cast<std::size_t>(layer.k) * layer.k;
  require(cols.cols() == layer.fan_in(), "baseline_prune_layer: input does not match layer fan-in");

  std::vector<std::size_t> feats;
  for (std::size_t ci = 0; ci < survivors.size(); ++ci)
    if (survivors[ci])
      for (std::size_t r = 0; r < block; ++r) feats.push_back(ci * block + r);

  const std::size_t plane = static_cast<std::size_t>(target.h()) * target.w();
  const std::size_t total = cols.rows();
  require(total == static_cast<std::size_t>(target.n()) * plane, "baseline_prune_layer: target positions mismatch");
  std::vector<std::size_t> rows(total);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (total > max_rows) {
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(max_rows);
    std::sort(rows.begin(), rows.end());
  }

  Matrix a(rows.size(), feats.size() + 1);
  Matrix b(rows.size(), static_cast<std::size_t>(layer.out));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = cols.row(rows[i]);
    for (std::size_t f = 0; f < feats.size(); ++f) a(i, f) = src[feats[f]];
    a(i, feats.size()) = 1.0f;
    const std::size_t sample = rows[i] / plane, pos = rows[i] % plane;
    for (int j = 0; j < layer.out; ++j)
      b(i, j) = target.data()[(sample * layer.out + j) * plane + pos];
  }
  const Matrix sol = lstsq(a, b);

  LayerSpec out = layer;
  std::fill(out.weights.begin(), out.weights.end(), 0.0f);
  for (std::size_t f = 0; f < feats.size(); ++f)
    for (int j = 0; j < layer.out; ++j) out.weights[feats[f] * layer.out + j] = sol(f, j);
  out.bias.assign(layer.out, 0.0f);
  for (int j = 0; j < layer.out; ++j) out.bias[j] = sol(feats.size(), j);
  return out;
}

PruneResult baseline_prune_network(const Network& net, const PruneConfig& cfg, const Dataset& data) {
  require(net.form == NetForm::kPlain, "baseline pruning needs a plain network");
  require(data.size() > 0, "baseline pruning: empty dataset");
  require(data.images.sample_shape() == net.input, "baseline pruning: data shape does not match network input");
  const Network teacher = fuse_relu(fold_batchnorm(net));
  teacher.validate();
  const auto lin = teacher.linear_layers();
  require(lin.back() == teacher.logits_layer(), "baseline pruning: last linear layer must be the classifier");
  for (const auto& l : cfg.layers) {
    bool found = false;
    for (std::size_t i = 0; i + 1 < lin.size(); ++i) found = found || teacher.layers[lin[i]].name == l.name;
    require(found, "prune config names layer '" + l.name + "', which is not a prunable layer");
  }

  PruneResult res;
  res.net = teacher;
  Network& student = res.net;
  student.masks.clear();
  const Tensor4& x = data.images;
  bool pruned = false;

  for (std::size_t li = 0; li + 1 < lin.size(); ++li) {
    const std::size_t i = lin[li], j = lin[li + 1];
    const std::string name = student.layers[i].name;
    const int n = student.layers[i].out;
    const int k = cfg.keep_for(name, n);
    require(k >= 1 && k <= n, "layer '" + name + "': keep count " + std::to_string(k) + " outside [1, " +
                                  std::to_string(n) + "]");
    Mask mask(n, 1);
    if (k < n) {
      const Tensor4 acts = forward_range_chunked(student, x.slice(0, std::min(kScoreSamples, x.n())), 0, i + 1);
      mask = build_mask(score_neurons(cfg.criterion, student.layers[i].weight_matrix(), &acts, cfg.seed + li), k);
      zero_masked_outputs(student.layers[i], mask);
      pruned = true;
    }
    student.masks[name] = mask;
    LayerLoss ll{name, k, 0, 0.0, 0.0, 0};
    if (pruned) {
      const Tensor4 input = forward_range_chunked(student, x, 0, j);
      const Tensor4 target = linear_preactivation(teacher.layers[j], forward_range_chunked(teacher, x, 0, j));
      const auto mse = [&](const LayerSpec& l) {
        const Tensor4 out = linear_preactivation(l, input);
        return squared_error(out, target, 0) / (static_cast<double>(out.n()) * out.h() * out.w());
      };
      ll.init_loss = mse(student.layers[j]);
      student.layers[j] = baseline_prune_layer(student.layers[j], mask, input, target, cfg.seed + 3000 + li);
      ll.final_loss = mse(student.layers[j]);
      ll.iters = 1;
    }
    res.losses.push_back(ll);
  }
  student.info["prune"] = cfg.to_json();
  student.info["method"] = "baseline";
  return res;
}

TrainReport finetune_network(Network& net, const Dataset& data, const OptimSettings& settings) {
  return train_classifier(net, data.images, data.labels, settings);
}

}  // namespace ldrf
