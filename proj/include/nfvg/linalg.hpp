// SPDX-License-Identifier: Apache-2.0
//
// Small dense square-matrix helpers used by the invertible 1x1 convolution.
// Always double precision regardless of the tensor storage type.
#pragma once

#include <cstddef>
#include <vector>

#include "nfvg/errors.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {
namespace linalg {

class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(int n, double fill = 0.0) : n_(n), v_(static_cast<std::size_t>(n) * n, fill) {}
  Matrix(int n, std::vector<double> row_major);

  static Matrix identity(int n);

  int size() const { return n_; }
  double& operator()(int r, int c) { return v_[static_cast<std::size_t>(r) * n_ + c]; }
  double operator()(int r, int c) const { return v_[static_cast<std::size_t>(r) * n_ + c]; }
  const std::vector<double>& values() const { return v_; }

  Matrix operator*(const Matrix& rhs) const;
  Matrix transpose() const;
  double max_abs_diff(const Matrix& other) const;

 private:
  int n_ = 0;
  std::vector<double> v_;
};

// P·M = L·U with unit-diagonal L.
struct LuDecomposition {
  Matrix p;
  Matrix l;
  Matrix u;
  std::vector<int> perm;  // row i of P·M is row perm[i] of M
  int sign = 1;           // det(P)
};

inline constexpr double kSingularPivot = 1e-12;

// Partial pivoting; SingularMatrixError when a pivot falls below kSingularPivot.
LuDecomposition lu_decompose(const Matrix& m);
double log_abs_det(const Matrix& m);
Matrix invert(const Matrix& m);

}  // namespace linalg
}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
