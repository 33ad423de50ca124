#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "permutopt/numkit.hpp"
#include "permutopt/rng.hpp"

using namespace permutopt;

namespace {

DenseMatrix naive_product(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c = DenseMatrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

}  // namespace

TEST(MatMul, IdentityLeavesMatrixUnchanged) {
  DenseMatrix m(2, 2);
  m << 1.5, -2.0, 3.25, 4.0;
  EXPECT_EQ(mat_mul(DenseMatrix::Identity(2, 2), m), m);
}

TEST(MatMul, HandArithmetic) {
  DenseMatrix a(2, 2), b(2, 1), expected(2, 1);
  a << 1, 2, 3, 4;
  b << 0, 1;
  expected << 2, 4;
  EXPECT_EQ(mat_mul(a, b), expected);
}

TEST(MatMul, MatchesTripleLoop) {
  SeededRng rng(11);
  const DenseMatrix a = random_uniform_matrix(7, 5, rng, -1.0, 1.0);
  const DenseMatrix b = random_uniform_matrix(5, 3, rng, -1.0, 1.0);
  const DenseMatrix c = mat_mul(a, b);
  const DenseMatrix oracle = naive_product(a, b);
  ASSERT_EQ(c.rows(), 7);
  ASSERT_EQ(c.cols(), 3);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(c(i, j), oracle(i, j), 1e-12);
  }
}

TEST(MatMul, ShapeErrorNamesBothShapes) {
  const DenseMatrix a = DenseMatrix::Zero(2, 3);
  const DenseMatrix b = DenseMatrix::Zero(2, 3);
  try {
    mat_mul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    ASSERT_NE(what.find("2x3"), std::string::npos) << what;
    EXPECT_NE(what.find("2x3"), what.rfind("2x3")) << "both operand shapes should appear: " << what;
  }
}

TEST(MatMul, Submultiplicative) {
  SeededRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(6));
    const Index k = 1 + static_cast<Index>(rng.below(6));
    const Index m = 1 + static_cast<Index>(rng.below(6));
    const DenseMatrix a = random_normal_matrix(n, k, rng);
    const DenseMatrix b = random_normal_matrix(k, m, rng);
    EXPECT_LE(frobenius_norm(mat_mul(a, b)), frobenius_norm(a) * frobenius_norm(b) * (1 + 1e-15));
  }
}

TEST(FrobeniusNorm, Examples) {
  EXPECT_EQ(frobenius_norm(DenseMatrix::Zero(3, 3)), 0.0);
  DenseMatrix m(1, 2);
  m << 3, 4;
  EXPECT_DOUBLE_EQ(frobenius_norm(m), 5.0);
  EXPECT_NEAR(frobenius_norm(DenseMatrix::Identity(2, 2)), 1.41421356, 1e-8);
}

TEST(Relu, SignSplit) {
  DenseMatrix m(1, 2), expected(1, 2);
  m << -1, 2;
  expected << 0, 2;
  EXPECT_EQ(DenseMatrix(relu(m)), expected);
}

TEST(Relu, AllNegativeGivesZero) {
  const DenseMatrix m = -DenseMatrix::Ones(3, 4);
  EXPECT_EQ(DenseMatrix(relu(m)), DenseMatrix::Zero(3, 4));
}

TEST(Relu, NonnegativeIsFixedPointAndIdempotent) {
  SeededRng rng(3);
  const DenseMatrix pos = random_uniform_matrix(4, 4, rng);
  EXPECT_EQ(DenseMatrix(relu(pos)), pos);
  const DenseMatrix mixed = random_normal_matrix(5, 6, rng);
  const DenseMatrix once = relu(mixed);
  EXPECT_EQ(DenseMatrix(relu(once)), once);
}

TEST(Rng, SameSeedSameStream) {
  SeededRng a(42), b(42);
  EXPECT_EQ(rng_uniform(a, 5), rng_uniform(b, 5));
}

TEST(Rng, EmptyDraw) {
  SeededRng rng(42);
  EXPECT_TRUE(rng_uniform(rng, 0).empty());
}

TEST(Rng, UniformMeanNearHalf) {
  SeededRng rng(2024);
  const auto draws = rng_uniform(rng, 100000);
  double sum = 0.0;
  for (double d : draws) {
    ASSERT_GE(d, 0.0);
    ASSERT_LT(d, 1.0);
    sum += d;
  }
  EXPECT_NEAR(sum / draws.size(), 0.5, 0.01);
}

TEST(Rng, StateRoundTrip) {
  SeededRng rng(9);
  rng_uniform(rng, 17);
  SeededRng copy = SeededRng::from_state(rng.state());
  EXPECT_EQ(rng_uniform(rng, 10), rng_uniform(copy, 10));
}

TEST(Rng, BelowStaysInRange) {
  SeededRng rng(1);
  for (int i = 0; i < 10000; ++i) ASSERT_LT(rng.below(7), 7u);
}

TEST(Rng, DistinctSeedsDiffer) {
  SeededRng a(1), b(2);
  EXPECT_NE(rng_uniform(a, 4), rng_uniform(b, 4));
}

TEST(Csv, RoundTrip) {
  SeededRng rng(4);
  const DenseMatrix m = random_normal_matrix(4, 3, rng);
  std::stringstream buf;
  write_csv_matrix(buf, m);
  EXPECT_EQ(read_csv_matrix(buf), m);
}

TEST(Csv, NonNumericCellReportsRowAndColumn) {
  std::stringstream buf("1,2\n3,x\n");
  try {
    read_csv_matrix(buf);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, col 2"), std::string::npos) << e.what();
  }
}

TEST(Csv, HeaderSkipped) {
  std::stringstream buf("a,b\n1,2\n");
  const DenseMatrix m = read_csv_matrix(buf, true);
  ASSERT_EQ(m.rows(), 1);
  EXPECT_EQ(m(0, 1), 2.0);
}

TEST(OrderInvariantNorm, MatchesEuclideanNorm) {
  SeededRng rng(8);
  const Vector v = random_normal_matrix(40, 1, rng).col(0);
  EXPECT_NEAR(order_invariant_norm(v), v.norm(), 1e-13);
}
