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

#include <cstddef>
#include <span>
#include <vector>

namespace ldrf {

struct Shape {
  int c = 0, h = 0, w = 0;

  std::size_t count() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
};

/// Dense NCHW activation tensor.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(int n, int c, int h, int w);  // zero-filled
  Tensor4(int n, int c, int h, int w, std::vector<float> data);

  int n() const noexcept { return n_; }
  int c() const noexcept { return c_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  Shape sample_shape() const { return {c_, h_, w_}; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
  float at(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }

  std::span<float> sample(int b) { return {data_.data() + b * sample_size(), sample_size()}; }
  std::span<const float> sample(int b) const { return {data_.data() + b * sample_size(), sample_size()}; }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  /// Samples [begin, begin + count).
  Tensor4 slice(int begin, int count) const;
  Tensor4 gather(std::span<const int> samples) const;

 private:
  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

Tensor4 concat_samples(std::span<const Tensor4> parts);

}  // namespace ldrf
