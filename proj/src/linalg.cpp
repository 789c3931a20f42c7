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

#include "ldrf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ldrf/error.hpp"

namespace ldrf {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_,
          "matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) + "x" +
              std::to_string(cols_));
  for (float v : data_) require(std::isfinite(v), "matrix entries must be finite");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

double Matrix::frobenius_norm() const {
  double acc = 0.0;
  for (float v : data_) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  Matrix c(m, n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a.row(i).data();
    for (std::size_t k = 0; k < p; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const float* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = c.row(i).data();
    for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_at_b: row counts differ");
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  std::vector<double> acc(p * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const float* arow = a.row(r).data();
    const float* brow = b.row(r).data();
    for (std::size_t i = 0; i < p; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* out = acc.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  Matrix c(p, n);
  for (std::size_t i = 0; i < p * n; ++i) c.data()[i] = static_cast<float>(acc[i]);
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_a_bt: column counts differ");
  const std::size_t m = a.rows(), p = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < p; ++k) acc += static_cast<double>(arow[k]) * brow[k];
      c(i, j) = static_cast<float>(acc);
    }
  }
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "subtract: shape mismatch");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kRotationTol = 1e-12;

// Column-major double-precision SVD of an m x n matrix, r = min(m, n).
struct DenseSvd {
  std::size_t m = 0, n = 0, r = 0;
  std::vector<double> u;  // m x r
  std::vector<double> s;  // r
  std::vector<double> v;  // n x r
};

double dot(const double* x, const double* y, std::size_t len) {
  double acc = 0.0;
  for (std::size_t i = 0; i < len; ++i) acc += x[i] * y[i];
  return acc;
}

// Fills columns flagged in `deficient` with unit vectors orthogonal to every
// other column of `basis` (dim x cols, column-major).
void complete_basis(std::vector<double>& basis, std::size_t dim, std::size_t cols,
                    const std::vector<bool>& deficient) {
  std::vector<bool> valid(cols);
  for (std::size_t c = 0; c < cols; ++c) valid[c] = !deficient[c];
  std::size_t candidate = 0;
  std::vector<double> w(dim);
  for (std::size_t c = 0; c < cols; ++c) {
    if (!deficient[c]) continue;
    while (candidate < dim) {
      std::fill(w.begin(), w.end(), 0.0);
      w[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < cols; ++o) {
          if (!valid[o]) continue;
          const double* col = basis.data() + o * dim;
          const double proj = dot(w.data(), col, dim);
          for (std::size_t i = 0; i < dim; ++i) w[i] -= proj * col[i];
        }
      }
      const double norm = std::sqrt(dot(w.data(), w.data(), dim));
      if (norm > 0.5) {
        double* col = basis.data() + c * dim;
        for (std::size_t i = 0; i < dim; ++i) col[i] = w[i] / norm;
        valid[c] = true;
        break;
      }
    }
  }
}

// Hestenes one-sided Jacobi on a tall matrix (m >= n), column-major input.
DenseSvd jacobi_tall(std::vector<double> a, std::size_t m, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double* ci = a.data() + i * m;
        double* cj = a.data() + j * m;
        const double alpha = dot(ci, ci, m);
        const double beta = dot(cj, cj, m);
        const double gamma = dot(ci, cj, m);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kRotationTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double x = ci[k], y = cj[k];
          ci[k] = c * x - s * y;
          cj[k] = s * x + c * y;
        }
        double* vi = v.data() + i * n;
        double* vj = v.data() + j * n;
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vi[k], y = vj[k];
          vi[k] = c * x - s * y;
          vj[k] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(a.data() + j * m, a.data() + j * m, m));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  DenseSvd out;
  out.m = m;
  out.n = n;
  out.r = n;
  out.u.assign(m * n, 0.0);
  out.v.assign(n * n, 0.0);
  out.s.resize(n);
  const double smax = n > 0 ? norms[order[0]] : 0.0;
  std::vector<bool> deficient(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.s[k] = norms[src];
    std::copy_n(v.data() + src * n, n, out.v.data() + k * n);
    if (smax == 0.0 || norms[src] <= 1e-13 * smax) {
      deficient[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) out.u[k * m + i] = a[src * m + i] / norms[src];
  }
  complete_basis(out.u, m, n, deficient);
  return out;
}

DenseSvd dense_svd(const std::vector<double>& colmajor, std::size_t m, std::size_t n) {
  if (m >= n) return jacobi_tall(colmajor, m, n);
  // Work on A^T (n x m), then swap roles of the factors.
  std::vector<double> at(n * m);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) at[i * n + j] = colmajor[j * m + i];
  DenseSvd t = jacobi_tall(std::move(at), n, m);
  DenseSvd out;
  out.m = m;
  out.n = n;
  out.r = m;
  out.u = std::move(t.v);
  out.v = std::move(t.u);
  out.s = std::move(t.s);
  return out;
}

void normalize_signs(DenseSvd& d) {
  for (std::size_t k = 0; k < d.r; ++k) {
    double* ucol = d.u.data() + k * d.m;
    for (std::size_t i = 0; i < d.m; ++i) {
      if (std::abs(ucol[i]) > 1e-12) {
        if (ucol[i] < 0.0) {
          for (std::size_t t = 0; t < d.m; ++t) ucol[t] = -ucol[t];
          double* vcol = d.v.data() + k * d.n;
          for (std::size_t t = 0; t < d.n; ++t) vcol[t] = -vcol[t];
        }
        break;
      }
    }
  }
}

std::vector<double> to_colmajor(const Matrix& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j * a.rows() + i] = a(i, j);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  require(a.rows() >= 1 && a.cols() >= 1, "svd: matrix has a zero dimension");
  DenseSvd d = dense_svd(to_colmajor(a), a.rows(), a.cols());
  normalize_signs(d);
  SvdResult res;
  res.s = d.s;
  res.u = Matrix(d.m, d.r);
  for (std::size_t k = 0; k < d.r; ++k)
    for (std::size_t i = 0; i < d.m; ++i) res.u(i, k) = static_cast<float>(d.u[k * d.m + i]);
  res.vt = Matrix(d.r, d.n);
  for (std::size_t k = 0; k < d.r; ++k)
    for (std::size_t j = 0; j < d.n; ++j) res.vt(k, j) = static_cast<float>(d.v[k * d.n + j]);
  return res;
}

Factorization truncated_factorize(const SvdResult& res, std::size_t z) {
  const std::size_t r = res.s.size();
  require(z >= 1 && z <= r, "truncated_factorize: rank " + std::to_string(z) + " outside [1, " +
                                std::to_string(r) + "]");
  Factorization f{Matrix(res.u.rows(), z), Matrix(z, res.vt.cols())};
  for (std::size_t i = 0; i < res.u.rows(); ++i)
    for (std::size_t k = 0; k < z; ++k) f.q(i, k) = res.u(i, k);
  for (std::size_t k = 0; k < z; ++k)
    for (std::size_t j = 0; j < res.vt.cols(); ++j)
      f.r(k, j) = static_cast<float>(res.s[k] * res.vt(k, j));
  return f;
}

double tail_energy(std::span<const double> s, std::size_t z) {
  double acc = 0.0;
  for (std::size_t i = z; i < s.size(); ++i) acc += s[i] * s[i];
  return std::sqrt(acc);
}

Matrix lstsq(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "lstsq: A has " + std::to_string(a.rows()) + " rows but B has " +
                                    std::to_string(b.rows()));
  require(a.rows() >= 1 && a.cols() >= 1, "lstsq: empty system");
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> am = to_colmajor(a);
  std::vector<double> bm = to_colmajor(b);

  // Reduce tall systems to p x p with Householder QR first.
  std::size_t rows = m;
  if (m > p) {
    std::vector<double> hv(m);
    for (std::size_t k = 0; k < p; ++k) {
      double* col = am.data() + k * m;
      double norm = 0.0;
      for (std::size_t i = k; i < m; ++i) norm += col[i] * col[i];
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      const double alpha = col[k] > 0.0 ? -norm : norm;
      double vnorm2 = 0.0;
      for (std::size_t i = k; i < m; ++i) {
        hv[i] = col[i] - (i == k ? alpha : 0.0);
        vnorm2 += hv[i] * hv[i];
      }
      if (vnorm2 == 0.0) continue;
      auto reflect = [&](double* target) {
        double proj = 0.0;
        for (std::size_t i = k; i < m; ++i) proj += hv[i] * target[i];
        proj = 2.0 * proj / vnorm2;
        for (std::size_t i = k; i < m; ++i) target[i] -= proj * hv[i];
      };
      for (std::size_t j = k; j < p; ++j) reflect(am.data() + j * m);
      for (std::size_t j = 0; j < q; ++j) reflect(bm.data() + j * m);
    }
    std::vector<double> r(p * p, 0.0), qb(p * q);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i <= j; ++i) r[j * p + i] = am[j * m + i];
    for (std::size_t j = 0; j < q; ++j)
      for (std::size_t i = 0; i < p; ++i) qb[j * p + i] = bm[j * m + i];
    am = std::move(r);
    bm = std::move(qb);
    rows = p;
  }

  DenseSvd d = dense_svd(am, rows, p);
  const double smax = d.r > 0 ? d.s[0] : 0.0;
  const double cutoff = smax * 1e-10;
  Matrix x(p, q);
  std::vector<double> coeff(d.r);
  for (std::size_t j = 0; j < q; ++j) {
    const double* bcol = bm.data() + j * rows;
    for (std::size_t k = 0; k < d.r; ++k) {
      coeff[k] = 0.0;
      if (d.s[k] <= cutoff || d.s[k] == 0.0) continue;
      coeff[k] = dot(d.u.data() + k * rows, bcol, rows) / d.s[k];
    }
    for (std::size_t i = 0; i < p; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d.r; ++k) acc += d.v[k * p + i] * coeff[k];
      x(i, j) = static_cast<float>(acc);
    }
  }
  return x;
}

}  // namespace ldrf
