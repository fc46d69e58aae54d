// SPDX-License-Identifier: Apache-2.0
#include "nfvg/linalg.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "nfvg/errors.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {
namespace linalg {

Matrix::Matrix(int n, std::vector<double> row_major) : n_(n), v_(std::move(row_major)) {
  if (v_.size() != static_cast<std::size_t>(n) * n) {
    throw ShapeError("Matrix: expected " + std::to_string(n * n) + " values, got " +
                     std::to_string(v_.size()));
  }
}

Matrix Matrix::identity(int n) {
  Matrix m(n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (rhs.n_ != n_) {
    throw ShapeError("Matrix product: " + std::to_string(n_) + "x" + std::to_string(n_) +
                     " vs " + std::to_string(rhs.n_) + "x" + std::to_string(rhs.n_));
  }
  Matrix out(n_);
  for (int i = 0; i < n_; ++i)
    for (int k = 0; k < n_; ++k) {
      const double a = (*this)(i, k);
      for (int j = 0; j < n_; ++j) out(i, j) += a * rhs(k, j);
    }
  return out;
}

Matrix Matrix::transpose() const {
  Matrix out(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

double Matrix::max_abs_diff(const Matrix& other) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < v_.size(); ++i) worst = std::max(worst, std::abs(v_[i] - other.v_[i]));
  return worst;
}

LuDecomposition lu_decompose(const Matrix& m) {
  const int n = m.size();
  if (n < 1) throw ShapeError("lu_decompose: empty matrix");

  Matrix a = m;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  int sign = 1;

  for (int k = 0; k < n; ++k) {
    int pivot = k;
    double best = std::abs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        pivot = i;
      }
    }
    if (!(best >= kSingularPivot)) {
      throw SingularMatrixError("lu_decompose: pivot " + std::to_string(k) + " has magnitude " +
                                std::to_string(best) + " (singular matrix)");
    }
    if (pivot != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
      std::swap(perm[k], perm[pivot]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i) {
      a(i, k) /= a(k, k);
      const double f = a(i, k);
      for (int j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }

  LuDecomposition out{Matrix(n), Matrix::identity(n), Matrix(n), perm, sign};
  for (int i = 0; i < n; ++i) {
    out.p(i, perm[i]) = 1.0;
    for (int j = 0; j < n; ++j) {
      if (j < i) out.l(i, j) = a(i, j);
      else out.u(i, j) = a(i, j);
    }
  }
  return out;
}

double log_abs_det(const Matrix& m) {
  const LuDecomposition lu = lu_decompose(m);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) acc += std::log(std::abs(lu.u(i, i)));
  return acc;
}

Matrix invert(const Matrix& m) {
  const int n = m.size();
  const LuDecomposition lu = lu_decompose(m);
  Matrix inv(n);
  std::vector<double> col(n);
  for (int c = 0; c < n; ++c) {
    // Solve L·U·x = P·e_c.
    for (int i = 0; i < n; ++i) col[i] = lu.perm[i] == c ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < i; ++j) col[i] -= lu.l(i, j) * col[j];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) col[i] -= lu.u(i, j) * col[j];
      col[i] /= lu.u(i, i);
    }
    for (int i = 0; i < n; ++i) inv(i, c) = col[i];
  }
  return inv;
}

}  // namespace linalg
}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
