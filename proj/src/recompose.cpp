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

#include "ldrf/recompose.hpp"

#include <algorithm>
#include <cmath>

#include "ldrf/error.hpp"

namespace ldrf {

namespace {

std::string base_name(const std::string& s) {
  return s.size() > 2 && s.compare(s.size() - 2, 2, ".q") == 0 ? s.substr(0, s.size() - 2) : s;
}

std::vector<std::size_t> kept(const Mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

void keep_outputs(LayerSpec& l, const std::vector<std::size_t>& keep) {
  const Matrix w = l.weight_matrix();
  Matrix nw(w.rows(), keep.size());
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t j = 0; j < keep.size(); ++j) nw(r, j) = w(r, keep[j]);
  std::vector<float> nb;
  if (!l.bias.empty())
    for (std::size_t j : keep) nb.push_back(l.bias[j]);
  l.out = static_cast<int>(keep.size());
  l.set_weight_matrix(nw);
  l.bias = std::move(nb);
}

// Keeps input channels `keep` of a linear layer whose input rows come in
// per-channel blocks of `block` rows.
void keep_inputs(LayerSpec& l, const std::vector<std::size_t>& keep, std::size_t block) {
  const Matrix w = l.weight_matrix();
  Matrix nw(keep.size() * block, w.cols());
  for (std::size_t c = 0; c < keep.size(); ++c)
    for (std::size_t r = 0; r < block; ++r) {
      const auto src = w.row(keep[c] * block + r);
      std::copy(src.begin(), src.end(), nw.row(c * block + r).begin());
    }
  l.in = static_cast<int>(l.is_dense_style() ? keep.size() * block : keep.size());
  l.set_weight_matrix(nw);
}

void keep_channels(std::vector<float>& v, const std::vector<std::size_t>& keep) {
  if (v.empty()) return;
  std::vector<float> out;
  for (std::size_t j : keep) out.push_back(v[j]);
  v = std::move(out);
}

}  // namespace

SlimLayer recompose_layer(const LayerSpec& embed, const LayerSpec& transform) {
  require(embed.kind == LayerKind::kEmbedConv && transform.kind == LayerKind::kPointwiseConv,
          "recompose_layer: expected an EmbedConv followed by a PointwiseConv");
  require(embed.out == transform.in, "recompose_layer: " + embed.name + " has " + std::to_string(embed.out) +
                                         " outputs but " + transform.name + " expects " +
                                         std::to_string(transform.in));
  const Matrix q = embed.weight_matrix();
  const Matrix r = transform.weight_matrix();
  SlimLayer s;
  s.source = base_name(embed.name);
  LayerSpec& l = s.layer;
  l.kind = embed.flatten ? LayerKind::kDense : LayerKind::kConv2D;
  l.name = s.source;
  l.k = embed.flatten ? 1 : embed.k;
  l.pad = embed.flatten ? 0 : embed.pad;
  l.stride = embed.flatten ? 1 : embed.stride;
  l.in = embed.in;
  l.out = transform.out;
  l.relu = transform.relu;
  l.weights = matmul(q, r).data();
  l.bias.assign(l.out, 0.0f);
  for (int j = 0; j < l.out; ++j) {
    double acc = transform.bias_at(j);
    for (int i = 0; i < embed.out; ++i) acc += static_cast<double>(r(i, j)) * embed.bias_at(i);
    l.bias[j] = static_cast<float>(acc);
  }
  return s;
}

Network recompose_network(const Network& decomposed) {
  require(decomposed.form == NetForm::kDecomposed, "recompose_network: network is not decomposed");
  Network out;
  out.name = decomposed.name;
  out.input = decomposed.input;
  out.form = NetForm::kPlain;
  out.masks = decomposed.masks;
  out.info = decomposed.info;
  const auto& ls = decomposed.layers;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (ls[i].kind == LayerKind::kEmbedConv) {
      require(i + 1 < ls.size() && ls[i + 1].kind == LayerKind::kPointwiseConv,
              "recompose_network: " + ls[i].name + " is not followed by its transformation factor");
      out.layers.push_back(recompose_layer(ls[i], ls[i + 1]).layer);
      ++i;
    } else {
      require(ls[i].kind != LayerKind::kPointwiseConv, "recompose_network: stray factor " + ls[i].name);
      out.layers.push_back(ls[i]);
    }
  }
  out.validate();
  return out;
}

Network strip_pruned(const Network& net) {
  require(net.form != NetForm::kSlim, "strip_pruned: network is already slim");
  Network out = net.form == NetForm::kDecomposed ? recompose_network(net) : net;
  const auto shapes = out.shapes();
  const std::size_t logits = out.logits_layer();
  for (const auto& [name, mask] : out.masks) {
    const std::size_t i = out.find(name);
    require(out.layers[i].is_linear(), "strip_pruned: mask on non-linear layer '" + name + "'");
    require(mask.size() == static_cast<std::size_t>(out.layers[i].out),
            "strip_pruned: mask for '" + name + "' has the wrong length");
    const auto keep = kept(mask);
    require(!keep.empty(), "strip_pruned: mask for '" + name + "' removes every channel");
    if (keep.size() == mask.size()) continue;
    require(i != logits, "strip_pruned: the classifier output cannot be masked");
    keep_outputs(out.layers[i], keep);
    for (std::size_t j = i + 1; j < out.layers.size(); ++j) {
      LayerSpec& l = out.layers[j];
      if (l.kind == LayerKind::kBatchNorm) {
        keep_channels(l.weights, keep);
        keep_channels(l.bias, keep);
        keep_channels(l.running_mean, keep);
        keep_channels(l.running_var, keep);
        l.in = l.out = static_cast<int>(keep.size());
      } else if (l.is_linear()) {
        const Shape in = shapes[j - 1];
        const std::size_t block = l.is_dense_style() ? static_cast<std::size_t>(in.h) * in.w
                                                     : static_cast<std::size_t>(l.k) * l.k;
        keep_inputs(l, keep, block);
        break;
      }
    }
  }
  out.form = NetForm::kSlim;
  out.validate();
  return out;
}

Equivalence verify_equivalence(const Network& a, const Network& b, const Tensor4& batch, double tol) {
  require(a.input == b.input, "verify_equivalence: networks have different input shapes");
  const Matrix la = forward_chunked(a, batch).logits;
  const Matrix lb = forward_chunked(b, batch).logits;
  require(la.rows() == lb.rows() && la.cols() == lb.cols(), "verify_equivalence: networks have different output shapes");
  Equivalence e;
  for (std::size_t i = 0; i < la.size(); ++i)
    e.max_abs_dev = std::max(e.max_abs_dev, std::abs(static_cast<double>(la.data()[i]) - lb.data()[i]));
  e.pass = e.max_abs_dev <= tol;
  return e;
}

}  // namespace ldrf
