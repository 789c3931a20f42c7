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

#include "ldrf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldrf/error.hpp"

namespace ldrf {

Tensor4::Tensor4(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
  require(n >= 0 && c >= 0 && h >= 0 && w >= 0, "tensor dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
}

Tensor4::Tensor4(int n, int c, int h, int w, std::vector<float> data)
    : n_(n), c_(c), h_(h), w_(w), data_(std::move(data)) {
  require(n >= 0 && c >= 0 && h >= 0 && w >= 0, "tensor dimensions must be non-negative");
  require(data_.size() == static_cast<std::size_t>(n) * c * h * w,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape");
  for (float v : data_) require(std::isfinite(v), "tensor entries must be finite");
}

Tensor4 Tensor4::slice(int begin, int count) const {
  require(begin >= 0 && count >= 0 && begin + count <= n_, "tensor slice out of range");
  Tensor4 out(count, c_, h_, w_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * sample_size()), count * sample_size(),
              out.data_.begin());
  return out;
}

Tensor4 Tensor4::gather(std::span<const int> samples) const {
  Tensor4 out(static_cast<int>(samples.size()), c_, h_, w_);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i] >= 0 && samples[i] < n_, "tensor gather index out of range");
    auto src = sample(samples[i]);
    std::copy(src.begin(), src.end(), out.sample(static_cast<int>(i)).begin());
  }
  return out;
}

Tensor4 concat_samples(std::span<const Tensor4> parts) {
  if (parts.empty()) return {};
  int total = 0;
  for (const auto& p : parts) {
    require(p.sample_shape() == parts[0].sample_shape(), "concat_samples: shape mismatch");
    total += p.n();
  }
  Tensor4 out(total, parts[0].c(), parts[0].h(), parts[0].w());
  auto it = out.data().begin();
  for (const auto& p : parts) it = std::copy(p.data().begin(), p.data().end(), it);
  return out;
}

}  // namespace ldrf
