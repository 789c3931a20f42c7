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

#include "ldrf/decompose.hpp"

#include <algorithm>
#include <cmath>

#include "ldrf/error.hpp"
#include "ldrf/metrics.hpp"

namespace ldrf {

namespace {

constexpr double kVarFloor = 1e-8;
constexpr const char* kEmbedSuffix = ".q";
constexpr const char* kTransformSuffix = ".r";

std::string strip_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
    return s.substr(0, s.size() - suffix.size());
  return s;
}

}  // namespace

LayerSpec DecomposedLayer::embed_layer() const {
  LayerSpec l;
  l.kind = LayerKind::kEmbedConv;
  l.name = name + kEmbedSuffix;
  l.k = k;
  l.pad = pad;
  l.stride = stride;
  l.in = in;
  l.out = z;
  l.flatten = flatten;
  l.weights = q.data();
  l.bias = q_bias;
  return l;
}

LayerSpec DecomposedLayer::transform_layer() const {
  LayerSpec l;
  l.kind = LayerKind::kPointwiseConv;
  l.name = name + kTransformSuffix;
  l.in = z;
  l.out = out;
  l.relu = relu;
  l.weights = r.data();
  l.bias = r_bias;
  return l;
}

DecomposedLayer DecomposedLayer::from_layers(const LayerSpec& embed, const LayerSpec& transform) {
  require(embed.kind == LayerKind::kEmbedConv && transform.kind == LayerKind::kPointwiseConv,
          "from_layers: expected an EmbedConv followed by a PointwiseConv");
  require(embed.out == transform.in, "from_layers: rank mismatch between " + embed.name + " and " + transform.name);
  DecomposedLayer d;
  d.name = strip_suffix(embed.name, kEmbedSuffix);
  d.k = embed.k;
  d.pad = embed.pad;
  d.stride = embed.stride;
  d.in = embed.in;
  d.out = transform.out;
  d.relu = transform.relu;
  d.flatten = embed.flatten;
  d.z = embed.out;
  d.q = embed.weight_matrix();
  d.r = transform.weight_matrix();
  d.q_bias = embed.bias.empty() ? std::vector<float>(d.z, 0.0f) : embed.bias;
  d.r_bias = transform.bias.empty() ? std::vector<float>(d.out, 0.0f) : transform.bias;
  d.norm_mean.assign(d.z, 0.0f);
  d.norm_var.assign(d.z, 1.0f);
  return d;
}

const RankEntry& RankReport::at(const std::string& name) const {
  for (const auto& e : layers)
    if (e.name == name) return e;
  throw_invalid("rank report has no layer '" + name + "'");
}

nlohmann::json RankReport::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["energy"] = energy;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : layers) {
    arr.push_back({{"name", e.name},
                   {"singular_values", e.singular_values},
                   {"cum_energy", e.cum_energy},
                   {"z", e.z},
                   {"n", e.n},
                   {"valid_range", {e.z, e.n}}});
  }
  j["layers"] = std::move(arr);
  return j;
}

RankReport RankReport::from_json(const nlohmann::json& j) {
  RankReport r;
  r.energy = j.value("energy", 0.0);
  for (const auto& e : j.at("layers")) {
    RankEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.singular_values = e.value("singular_values", std::vector<double>{});
    entry.cum_energy = e.value("cum_energy", std::vector<double>{});
    entry.z = e.at("z").get<int>();
    entry.n = e.at("n").get<int>();
    r.layers.push_back(std::move(entry));
  }
  return r;
}

std::vector<double> cumulative_energy(const std::vector<double>& s) {
  double total = 0.0;
  for (double v : s) total += v;
  std::vector<double> cum(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += s[i];
    cum[i] = total > 0.0 ? acc / total : 0.0;
  }
  if (!cum.empty() && total > 0.0) cum.back() = 1.0;
  return cum;
}

int estimate_rank(const std::vector<double>& s, double energy) {
  require(energy > 0.0 && energy <= 1.0, "energy must lie in (0, 1], got " + std::to_string(energy));
  require(!s.empty(), "estimate_rank: no singular values");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(s[i] >= 0.0, "estimate_rank: negative singular value");
    require(i == 0 || s[i] <= s[i - 1] * (1.0 + 1e-9) + 1e-300, "estimate_rank: singular values not sorted");
    total += s[i];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kDegenerateLayer, "all singular values are zero");
  // Slack absorbs rounding so that energy 1.0 selects the numerically nonzero values.
  const double target = energy * total - 1e-9 * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += s[i];
    if (acc >= target) return static_cast<int>(i + 1);
  }
  return static_cast<int>(s.size());
}

RankEntry rank_entry(const LayerSpec& layer, double energy) {
  require(layer.kind == LayerKind::kConv2D || layer.kind == LayerKind::kDense,
          "layer " + layer.name + " is not a Conv2D or Dense layer");
  const SvdResult res = svd(layer.weight_matrix());
  RankEntry e;
  e.name = layer.name;
  e.singular_values = res.s;
  e.cum_energy = cumulative_energy(res.s);
  try {
    e.z = estimate_rank(res.s, energy);
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kDegenerateLayer)
      throw Error(ErrorCode::kDegenerateLayer, "layer " + layer.name + " has all-zero weights");
    throw;
  }
  e.n = layer.out;
  return e;
}

DecomposedLayer decompose_layer(const LayerSpec& layer, double energy) {
  require(layer.kind == LayerKind::kConv2D || layer.kind == LayerKind::kDense,
          "layer " + layer.name + " is not a Conv2D or Dense layer");
  const SvdResult res = svd(layer.weight_matrix());
  int z = 0;
  try {
    z = estimate_rank(res.s, energy);
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kDegenerateLayer)
      throw Error(ErrorCode::kDegenerateLayer, "layer " + layer.name + " has all-zero weights");
    throw;
  }
  Factorization f = truncated_factorize(res, static_cast<std::size_t>(z));
  DecomposedLayer d;
  d.name = layer.name;
  d.k = layer.k;
  d.pad = layer.pad;
  d.stride = layer.stride;
  d.in = layer.in;
  d.out = layer.out;
  d.relu = layer.relu;
  d.flatten = layer.is_dense_style();
  d.z = z;
  d.q = std::move(f.q);
  d.r = std::move(f.r);
  d.q_bias.assign(z, 0.0f);
  d.r_bias = layer.bias.empty() ? std::vector<float>(layer.out, 0.0f) : layer.bias;
  d.norm_mean.assign(z, 0.0f);
  d.norm_var.assign(z, 1.0f);
  return d;
}

DecomposedLayer fold_normalization(const DecomposedLayer& layer, const std::vector<double>& mean,
                                   const std::vector<double>& var) {
  const auto z = static_cast<std::size_t>(layer.z);
  require(mean.size() == z && var.size() == z,
          "fold_normalization: statistics length " + std::to_string(mean.size()) + " != rank " + std::to_string(z));
  DecomposedLayer out = layer;
  std::vector<double> scale(z);
  for (std::size_t j = 0; j < z; ++j) scale[j] = std::sqrt(std::max(var[j], kVarFloor));

  // r_bias += R^T m, using R before rescaling.
  for (std::size_t i = 0; i < static_cast<std::size_t>(layer.out); ++i) {
    double acc = layer.r_bias[i];
    for (std::size_t j = 0; j < z; ++j) acc += static_cast<double>(layer.r(j, i)) * mean[j];
    out.r_bias[i] = static_cast<float>(acc);
  }
  for (std::size_t j = 0; j < z; ++j) {
    for (std::size_t row = 0; row < layer.q.rows(); ++row)
      out.q(row, j) = static_cast<float>(layer.q(row, j) / scale[j]);
    out.q_bias[j] = static_cast<float>((layer.q_bias[j] - mean[j]) / scale[j]);
    for (std::size_t col = 0; col < layer.r.cols(); ++col)
      out.r(j, col) = static_cast<float>(layer.r(j, col) * scale[j]);
    out.norm_mean[j] = static_cast<float>(mean[j]);
    out.norm_var[j] = static_cast<float>(scale[j] * scale[j]);
  }
  return out;
}

RankReport analyze_network(const Network& net, double energy) {
  RankReport report;
  report.energy = energy;
  const Network canon = fuse_relu(fold_batchnorm(net));
  for (const auto& l : canon.layers)
    if (l.kind == LayerKind::kConv2D || l.kind == LayerKind::kDense) report.layers.push_back(rank_entry(l, energy));
  return report;
}

std::vector<std::pair<std::size_t, std::size_t>> decomposed_pairs(const Network& net) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i)
    if (net.layers[i].kind == LayerKind::kEmbedConv && net.layers[i + 1].kind == LayerKind::kPointwiseConv)
      out.emplace_back(i, i + 1);
  return out;
}

namespace {

// Per-channel mean and population variance over samples and positions.
void channel_moments(const Tensor4& t, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
  const double count = static_cast<double>(t.n()) * plane;
  mean.assign(t.c(), 0.0);
  var.assign(t.c(), 0.0);
  for (int c = 0; c < t.c(); ++c) {
    double s = 0.0;
    for (int b = 0; b < t.n(); ++b) {
      const float* p = t.data().data() + (static_cast<std::size_t>(b) * t.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double m = s / count;
    double ss = 0.0;
    for (int b = 0; b < t.n(); ++b) {
      const float* p = t.data().data() + (static_cast<std::size_t>(b) * t.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
    }
    mean[c] = m;
    var[c] = ss / count;
  }
}

void normalize_embeddings(Network& net, const Tensor4& stats_data) {
  const auto pairs = decomposed_pairs(net);
  std::set<std::size_t> capture;
  for (const auto& [e, t] : pairs) capture.insert(e);
  const ForwardResult fr = forward_chunked(net, stats_data, capture);
  for (const auto& [e, t] : pairs) {
    std::vector<double> mean, var;
    channel_moments(fr.trace.at(e), mean, var);
    DecomposedLayer d = DecomposedLayer::from_layers(net.layers[e], net.layers[t]);
    d = fold_normalization(d, mean, var);
    net.layers[e] = d.embed_layer();
    net.layers[t] = d.transform_layer();
  }
}

}  // namespace

DecomposeResult decompose_network(const Network& net, double energy, const Dataset& data,
                                  const DecomposeOptions& options) {
  require(net.form != NetForm::kDecomposed, "network '" + net.name + "' is already decomposed");
  require(data.size() > 0, "decompose_network: empty dataset");
  require(data.images.sample_shape() == net.input, "decompose_network: data shape does not match network input");
  const Network canon = fuse_relu(fold_batchnorm(net));
  canon.validate();

  DecomposeResult res;
  res.report.energy = energy;
  res.net.name = canon.name;
  res.net.input = canon.input;
  res.net.form = NetForm::kDecomposed;
  res.net.info = canon.info;
  res.net.info["energy"] = energy;
  const std::size_t logits = canon.logits_layer();
  for (std::size_t i = 0; i < canon.layers.size(); ++i) {
    const LayerSpec& l = canon.layers[i];
    if (l.kind == LayerKind::kConv2D || l.kind == LayerKind::kDense) {
      const double e = i == logits && options.classifier_energy > 0.0 ? options.classifier_energy : energy;
      RankEntry entry = rank_entry(l, e);
      DecomposedLayer d = decompose_layer(l, e);
      res.net.layers.push_back(d.embed_layer());
      res.net.layers.push_back(d.transform_layer());
      res.report.layers.push_back(std::move(entry));
    } else {
      res.net.layers.push_back(l);
    }
  }

  const int stats_n = std::min(data.size(), std::max(1, options.stats_batches * options.stats_batch_size));
  const Tensor4 stats = data.images.slice(0, stats_n);
  normalize_embeddings(res.net, stats);

  if (options.finetune_iters > 0) {
    OptimSettings ft = options.finetune;
    ft.iters = options.finetune_iters;
    train_classifier(res.net, data.images, data.labels, ft);
    normalize_embeddings(res.net, stats);
  }
  return res;
}

EnergySearchResult search_energy(const Network& net, const Dataset& data, const Dataset& validation,
                                 double tolerance, double start, const DecomposeOptions& options) {
  require(start > 0.0 && start <= 0.9 + 1e-9, "search_energy: start must lie in (0, 0.9]");
  EnergySearchResult out;
  out.reference_accuracy = evaluate(net, validation).accuracy;
  for (int step = 0;; ++step) {
    const double e = start + 0.05 * step;
    if (e > 0.9 + 1e-9) break;
    DecomposeResult r = decompose_network(net, e, data, options);
    const double acc = evaluate(r.net, validation).accuracy;
    out.energy = e;
    out.accuracy = acc;
    out.result = std::move(r);
    if (out.reference_accuracy - acc <= tolerance) {
      out.recovered = true;
      break;
    }
  }
  return out;
}

}  // namespace ldrf
