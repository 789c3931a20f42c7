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

#include "ldrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ldrf/error.hpp"
#include "ldrf/train.hpp"

namespace ldrf {

FlopsScope flops_scope_from_string(const std::string& s) {
  if (s == "conv") return FlopsScope::kConv;
  if (s == "all") return FlopsScope::kAll;
  throw_invalid("flops scope must be 'conv' or 'all', got '" + s + "'");
}

const char* to_string(FlopsScope scope) { return scope == FlopsScope::kConv ? "conv" : "all"; }

std::uint64_t layer_macs(const LayerSpec& l, Shape input) {
  if (!l.is_linear()) return 0;
  if (l.is_dense_style()) return static_cast<std::uint64_t>(l.in) * static_cast<std::uint64_t>(l.out);
  const auto ho = static_cast<std::uint64_t>(conv_out_size(input.h, l.k, l.pad, l.stride));
  const auto wo = static_cast<std::uint64_t>(conv_out_size(input.w, l.k, l.pad, l.stride));
  return static_cast<std::uint64_t>(l.k) * l.k * static_cast<std::uint64_t>(l.in) * static_cast<std::uint64_t>(l.out) *
         ho * wo;
}

bool in_scope(const LayerSpec& l, FlopsScope scope) {
  if (!l.is_linear()) return false;
  return scope == FlopsScope::kAll || !l.is_dense_style();
}

CostReport cost_report(const Network& net, FlopsScope scope) {
  const auto shapes = net.shapes();
  CostReport rep;
  Shape in = net.input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (in_scope(l, scope)) {
      LayerCost c{l.name, to_string(l.kind), layer_macs(l, in), l.is_dense_style() ? in.c : l.in, l.out};
      rep.total += c.macs;
      rep.layers.push_back(std::move(c));
    }
    in = shapes[i];
  }
  return rep;
}

nlohmann::json CostReport::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["unit"] = "MAC";
  j["total_macs"] = total;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers)
    arr.push_back({{"name", l.name}, {"kind", l.kind}, {"macs", l.macs}, {"in", l.in_channels}, {"out", l.out_channels}});
  j["layers"] = std::move(arr);
  return j;
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "layer,kind,in,out,macs\n";
  for (const auto& l : layers) os << l.name << ',' << l.kind << ',' << l.in_channels << ',' << l.out_channels << ',' << l.macs << '\n';
  os << "total,,,," << total << '\n';
  return os.str();
}

double speedup(const Network& original, const Network& pruned, FlopsScope scope) {
  const auto a = cost_report(original, scope).total;
  const auto b = cost_report(pruned, scope).total;
  require(b > 0, "speedup: pruned network has zero cost in scope '" + std::string(to_string(scope)) + "'");
  return static_cast<double>(a) / static_cast<double>(b);
}

std::vector<double> sparsity_report(const std::vector<ChannelCounts>& original,
                                    const std::vector<ChannelCounts>& pruned) {
  require(original.size() == pruned.size(), "sparsity_report: layer count mismatch");
  std::vector<double> out(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    const auto& o = original[i];
    const auto& p = pruned[i];
    require(o.in > 0 && o.out > 0, "sparsity_report: original layer has no channels");
    require(p.in >= 0 && p.out >= 0 && p.in <= o.in && p.out <= o.out,
            "sparsity_report: pruned channel counts exceed the original at layer " + std::to_string(i));
    out[i] = 1.0 - (static_cast<double>(p.in) * p.out) / (static_cast<double>(o.in) * o.out);
  }
  return out;
}

double display_percent(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

EvalResult evaluate(const Network& net, const Dataset& data, int threads) {
  require(data.size() > 0, "evaluate: empty dataset");
  const ForwardResult fr = forward_chunked(net, data.images, {}, 256, threads);
  const Matrix& logits = fr.logits;
  require(logits.cols() >= data.num_classes, "evaluate: network has fewer outputs than dataset classes");
  EvalResult r;
  r.samples = data.size();
  r.loss = softmax_cross_entropy(logits, data.labels);
  int correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == data.labels[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / data.size();
  return r;
}

}  // namespace ldrf
