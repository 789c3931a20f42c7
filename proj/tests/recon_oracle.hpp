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

#include <cmath>
#include <random>

#include "ldrf/reconstruct.hpp"
#include "test_util.hpp"

namespace ldrf::testing {

// Random reconstruction instance: R' (1x1, ReLU) -> [max-pool] -> Q' (3x3 or
// dense-style), with a random mask keeping at least one channel.
inline ReconProblem random_recon_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> zin_d(2, 5), n_d(3, 8), zout_d(2, 6);
  const int zin = zin_d(rng), n = n_d(rng), zout = zout_d(rng);
  const bool pool = seed % 2 == 0;
  const bool dense = seed % 3 == 0;
  const int hw = 4;
  ReconProblem p;
  p.layer = "layer" + std::to_string(seed);
  LayerSpec r = make_conv(p.layer + ".r", zin, n, 1, 0, 1, true);
  r.kind = LayerKind::kPointwiseConv;
  randomize(r, rng, 0.7);
  p.path.push_back(r);
  int side = hw;
  if (pool) {
    p.path.push_back(make_maxpool("pool", 2, 2));
    side /= 2;
  }
  LayerSpec q = dense ? make_dense("next.q", n * side * side, zout, false) : make_conv("next.q", n, zout, 3, 1, 1, false);
  q.kind = LayerKind::kEmbedConv;
  q.flatten = dense;
  randomize(q, rng, 0.5);
  p.path.push_back(q);
  p.mask.assign(n, 1);
  std::bernoulli_distribution drop(0.4);
  for (int i = 1; i < n; ++i) p.mask[i] = drop(rng) ? 0 : 1;
  p.input = random_tensor(6, zin, hw, hw, rng);
  const int oside = dense ? 1 : side;
  p.target = random_tensor(6, zout, oside, oside, rng);
  return p;
}

inline double ref_recon_loss(const std::vector<RefLayer>& layers, const ReconProblem& p, Pattern* pat) {
  const RefTensor y = ref_forward(layers, RefTensor(p.input), p.mask, pat);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    const double d = y.v[i] - p.target.data()[i];
    acc += d * d;
  }
  return acc / (static_cast<double>(p.target.n()) * p.target.h() * p.target.w());
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - fd|| / ||fd|| over checked coordinates
  double loss_error = 0.0;
  int checked = 0;
  int kinks = 0;
};

// Central differences of a double-precision reference loss; coordinates whose
// perturbation flips a ReLU sign or a pooling argmax are skipped.
inline GradCheck check_recon_gradient(const ReconProblem& p, double h = 1e-5) {
  const ReconGrad g = recon_grad(p);
  auto ref = ref_layers(p.path);
  Pattern base;
  const double loss = ref_recon_loss(ref, p, &base);
  GradCheck out;
  out.loss_error = std::fabs(loss - g.loss) / std::max(1e-12, std::fabs(loss));
  const std::vector<bool> trainable = recon_trainable(p.path);
  double num = 0.0, den = 0.0;
  for (std::size_t li = 0; li < p.path.size(); ++li) {
    if (!trainable[li]) continue;
    for (int which = 0; which < 2; ++which) {
      auto& params = which == 0 ? ref[li].w : ref[li].b;
      const auto& analytic = which == 0 ? g.grads[li].weights : g.grads[li].bias;
      if (analytic.size() != params.size()) return {INFINITY, out.loss_error, 0, 0};
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        Pattern pp, pm;
        params[i] = keep + h;
        const double fp = ref_recon_loss(ref, p, &pp);
        params[i] = keep - h;
        const double fm = ref_recon_loss(ref, p, &pm);
        params[i] = keep;
        if (pp != base || pm != base) {
          ++out.kinks;
          continue;
        }
        const double fd = (fp - fm) / (2 * h);
        num += (analytic[i] - fd) * (analytic[i] - fd);
        den += fd * fd;
        ++out.checked;
      }
    }
  }
  out.rel_error = std::sqrt(num / std::max(den, 1e-300));
  return out;
}

}  // namespace ldrf::testing
