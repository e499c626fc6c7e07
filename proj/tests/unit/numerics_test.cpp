#include "attnlab/errors.hpp"
#include "attnlab/numerics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace attnlab;
using num::Mat;
using num::Vec;

namespace {

Mat seeded(int rows, int cols, unsigned seed) {
  std::srand(seed);
  return Mat::Random(rows, cols);
}

}  // namespace

TEST(Numerics, VecStacksColumns) {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  Vec v = num::vec(m);
  Vec want(6);
  want << 1, 4, 2, 5, 3, 6;
  EXPECT_EQ(v, want);
  EXPECT_EQ(num::unvec(v, 2, 3), m);
}

TEST(Numerics, KronVecIdentity) {
  const Mat a = seeded(3, 2, 1), b = seeded(2, 4, 2), c = seeded(4, 2, 3);
  const Vec lhs = num::vec(a * b * c);
  const Vec rhs = num::kron(c.transpose(), a) * num::vec(b);
  EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(Numerics, KronBlockLayout) {
  Mat a(2, 2), b(1, 2);
  a << 1, 2, 3, 4;
  b << 5, 6;
  Mat want(2, 4);
  want << 5, 6, 10, 12, 15, 18, 20, 24;
  EXPECT_EQ(num::kron(a, b), want);
}

TEST(Numerics, HadamardRejectsShapeMismatch) {
  EXPECT_THROW(num::hadamard(Mat::Ones(2, 2), Mat::Ones(2, 3)), Error);
  Mat a(1, 2), b(1, 2);
  a << 2, 3;
  b << 4, 5;
  Mat want(1, 2);
  want << 8, 15;
  EXPECT_EQ(num::hadamard(a, b), want);
}

TEST(Numerics, UpsilonReciprocalAndDomain) {
  Mat m(1, 3);
  m << 2, -4, 0.5;
  Mat want(1, 3);
  want << 0.5, -0.25, 2;
  EXPECT_EQ(num::upsilon(m), want);
  m(0, 1) = 0.0;
  try {
    num::upsilon(m);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("(0,1)"), std::string::npos) << e.what();
  }
}

TEST(Numerics, SingularValuesMatchJacobiOracle) {
  for (unsigned seed = 0; seed < 10; ++seed) {
    const Mat m = seeded(3 + seed % 4, 2 + seed % 5, seed + 10);
    const Vec got = num::singular_values(m);
    const Vec want = oracle::singular_values(m);
    ASSERT_EQ(got.size(), want.size());
    EXPECT_LT((got - want).norm(), 1e-10 * std::max(1.0, want(0))) << "seed " << seed;
  }
}

TEST(Numerics, SigmaMinRowsIsZeroForWideDeficit) {
  EXPECT_EQ(num::sigma_min_rows(seeded(4, 3, 5)), 0.0);
  const Mat tall = seeded(2, 5, 6);
  EXPECT_NEAR(num::sigma_min_rows(tall), oracle::singular_values(tall).minCoeff(), 1e-12);
}

TEST(Numerics, NumericalRankUsesRelativeCutoff) {
  Mat m = Mat::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-5;
  m(2, 2) = 1e-12;
  EXPECT_EQ(num::numerical_rank(m), 2u);
  EXPECT_EQ(num::numerical_rank(m, 1e-4), 1u);
  EXPECT_EQ(num::numerical_rank(Mat::Zero(2, 2)), 0u);
}

TEST(Numerics, NonFiniteInputRaisesNumericalError) {
  Mat m = Mat::Ones(2, 2);
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(num::singular_values(m), NumericalError);
  EXPECT_FALSE(num::all_finite(m));
}

TEST(Numerics, NormsAndBlockDiag) {
  Mat m(2, 2);
  m << 3, 0, 0, 4;
  EXPECT_DOUBLE_EQ(num::frobenius(m), 5.0);
  EXPECT_NEAR(num::spectral_norm(m), 4.0, 1e-14);
  const Mat bd = num::block_diag({Mat::Ones(2, 1), 2 * Mat::Ones(2, 1)});
  Mat want = Mat::Zero(4, 2);
  want.block(0, 0, 2, 1).setOnes();
  want.block(2, 1, 2, 1).setConstant(2);
  EXPECT_EQ(bd, want);
}
