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

/// Dense row-major single-precision matrix.
///
/// Storage is 32-bit; every product below accumulates in 64-bit so results
/// do not depend on blocking or thread count.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  // Validates that data.size() == rows*cols and that all entries are finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  double frobenius_norm() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);       // a * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix subtract(const Matrix& a, const Matrix& b);

struct SvdResult {
  Matrix u;                 // m x r, orthonormal columns
  std::vector<double> s;    // r = min(m, n), non-increasing
  Matrix vt;                // r x n, orthonormal rows
};

/// One-sided Jacobi SVD. Columns of `u` are sign-normalized so that their
/// first nonzero entry is positive, which makes the factorization
/// deterministic. Rank-deficient inputs get an orthonormal completion of `u`.
SvdResult svd(const Matrix& a);

struct Factorization {
  Matrix q;  // m x z, first z left singular vectors
  Matrix r;  // z x n, diag(s_1..s_z) * first z rows of vt
};

Factorization truncated_factorize(const SvdResult& res, std::size_t z);

/// Frobenius norm of the discarded singular values, sqrt(sum_{i>z} s_i^2).
double tail_energy(std::span<const double> s, std::size_t z);

/// Minimum-norm least-squares solution of A X = B.
Matrix lstsq(const Matrix& a, const Matrix& b);

}  // namespace ldrf
