// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "nfvg/linalg.hpp"

using namespace nfvg::linalg;

namespace {
Matrix random_matrix(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = d(rng) + (r == c ? 3.0 : 0.0);
  return m;
}
}  // namespace

TEST(Lu, IdentityHasZeroLogDet) { EXPECT_EQ(log_abs_det(Matrix::identity(2)), 0.0); }

TEST(Lu, DiagonalLogDet) {
  EXPECT_NEAR(log_abs_det(Matrix(2, {2, 0, 0, 3})), std::log(6.0), 1e-12);
  EXPECT_NEAR(log_abs_det(Matrix(2, {2, 0, 0, 3})), 1.791759, 1e-6);
}

TEST(Lu, FactorsReproduceRowPermutedMatrix) {
  for (int n : {1, 2, 4, 7}) {
    const Matrix m = random_matrix(n, 10 + n);
    const LuDecomposition lu = lu_decompose(m);
    EXPECT_LT((lu.p * m).max_abs_diff(lu.l * lu.u), 1e-12) << n;
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(lu.l(i, i), 1.0);
      for (int j = i + 1; j < n; ++j) EXPECT_EQ(lu.l(i, j), 0.0);
      for (int j = 0; j < i; ++j) EXPECT_EQ(lu.u(i, j), 0.0);
    }
  }
}

TEST(Lu, PartialPivotingHandlesZeroLeadingEntry) {
  const Matrix m(2, {0, 1, 1, 0});
  const LuDecomposition lu = lu_decompose(m);
  EXPECT_EQ(lu.sign, -1);
  EXPECT_EQ(lu.perm[0], 1);
  EXPECT_NEAR(log_abs_det(m), 0.0, 1e-15);
}

TEST(Lu, PivotPicksLargestMagnitude) {
  const Matrix m(3, {1e-3, 2, 3, 4, 5, 6, -7, 8, 10});
  EXPECT_EQ(lu_decompose(m).perm[0], 2);
}

TEST(Lu, LogDetMatchesEigen) {
  const Matrix m = random_matrix(5, 3);
  Eigen::Map<const Eigen::Matrix<double, 5, 5, Eigen::RowMajor>> e(m.values().data());
  EXPECT_NEAR(log_abs_det(m), std::log(std::abs(e.determinant())), 1e-10);
}

TEST(Lu, InverseMultipliesBackToIdentity) {
  const Matrix m = random_matrix(4, 42);
  EXPECT_LT((invert(m) * m).max_abs_diff(Matrix::identity(4)), 1e-5);
  EXPECT_LT((m * invert(m)).max_abs_diff(Matrix::identity(4)), 1e-5);
}

TEST(Lu, SingularMatrixIsRejected) {
  EXPECT_THROW(lu_decompose(Matrix(2, {1, 2, 2, 4})), nfvg::SingularMatrixError);
  EXPECT_THROW(log_abs_det(Matrix(3)), nfvg::SingularMatrixError);
  EXPECT_THROW(invert(Matrix(2, {1e-13, 0, 0, 1e-13})), nfvg::SingularMatrixError);
}
