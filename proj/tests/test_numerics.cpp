#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "charforge/numerics.hpp"
#include "test_support.hpp"

namespace cf = charforge;
using cf::Matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix<double> m{{1, 2}, {3, 4}};
  EXPECT_EQ(cf::matmul(Matrix<double>::identity(2), m), m);
}

TEST(Matmul, HandComputedProduct) {
  const Matrix<float> a{{1, 2}, {3, 4}};
  const Matrix<float> b{{5, 6}, {7, 8}};
  EXPECT_EQ(cf::matmul(a, b), (Matrix<float>{{19, 22}, {43, 50}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  const Matrix<float> a(2, 3);
  const Matrix<float> b(2, 2);
  try {
    (void)cf::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const cf::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2x2)"), std::string::npos) << msg;
  }
}

TEST(Matmul, OverflowIsReportedAsNonFinite) {
  const Matrix<float> a{{3e38f, 3e38f}};
  const Matrix<float> b{{2}, {2}};
  EXPECT_THROW((void)cf::matmul(a, b), cf::NumericError);
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = cf::testing::random_matrix<double>(1 + trial % 5, 2 + trial % 7, gen);
    const auto b = cf::testing::random_matrix<double>(a.cols(), 1 + trial % 4, gen);
    const auto c = cf::matmul(a, b);
    const auto ref = cf::testing::naive_matmul(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.flat()[i], ref.flat()[i], 1e-12);
  }
}

TEST(Matmul, AssociativityFloatAndDouble) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 2 + trial % 4, k = 3 + trial % 3, n = 2 + trial % 5, p = 1 + trial % 3;
    const auto ad = cf::testing::random_matrix<double>(m, k, gen);
    const auto bd = cf::testing::random_matrix<double>(k, n, gen);
    const auto cd = cf::testing::random_matrix<double>(n, p, gen);
    const auto left = cf::matmul(cf::matmul(ad, bd), cd);
    const auto right = cf::matmul(ad, cf::matmul(bd, cd));
    const auto lf = cf::matmul(cf::matmul(ad.cast<float>(), bd.cast<float>()), cd.cast<float>());
    const auto rf = cf::matmul(ad.cast<float>(), cf::matmul(bd.cast<float>(), cd.cast<float>()));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double scale = std::max(1.0, std::abs(left.flat()[i]));
      EXPECT_LE(std::abs(left.flat()[i] - right.flat()[i]), 1e-10 * scale);
      EXPECT_LE(std::abs(lf.flat()[i] - rf.flat()[i]), 1e-4 * scale);
    }
  }
}

TEST(Kernels, TransposedVariantsAgreeWithExplicitTranspose) {
  std::mt19937_64 gen(3);
  const auto a = cf::testing::random_matrix<double>(4, 3, gen);
  const auto b = cf::testing::random_matrix<double>(4, 5, gen);
  Matrix<double> at;
  cf::kernels::transpose_into(a, at);
  Matrix<double> tn(3, 5);
  cf::kernels::gemm_tn_acc(a, b, tn);
  const auto ref_tn = cf::testing::naive_matmul(at, b);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.flat()[i], ref_tn.flat()[i], 1e-12);

  const auto lhs = cf::testing::random_matrix<double>(4, 3, gen);
  const auto rhs = cf::testing::random_matrix<double>(6, 3, gen);
  Matrix<double> nt(4, 6), scratch, rhs_t;
  cf::kernels::gemm_nt_acc(lhs, rhs, nt, scratch);
  cf::kernels::transpose_into(rhs, rhs_t);
  const auto ref_nt = cf::testing::naive_matmul(lhs, rhs_t);
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.flat()[i], ref_nt.flat()[i], 1e-12);
}

TEST(Elementwise, ValuesAtZero) {
  const Matrix<double> z(1, 1);
  EXPECT_EQ(cf::elementwise(cf::Activation::sigmoid, z)(0, 0), 0.5);
  EXPECT_EQ(cf::elementwise(cf::Activation::tanh, z)(0, 0), 0.0);
}

TEST(Elementwise, SigmoidOfTwenty) {
  // 1 / (1 + e^-20) evaluated at 30 significant digits.
  const Matrix<double> x{{20.0}};
  EXPECT_NEAR(cf::elementwise(cf::Activation::sigmoid, x)(0, 0), 0.999999997938846381809796, 1e-15);
}

TEST(Elementwise, RejectsNonFiniteInput) {
  const Matrix<float> x{{std::numeric_limits<float>::quiet_NaN()}};
  EXPECT_THROW((void)cf::elementwise(cf::Activation::tanh, x), cf::NumericError);
}

TEST(Elementwise, SigmoidSymmetryProperty) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<float> d(-30.f, 30.f);
  for (int i = 0; i < 1000; ++i) {
    const float v = d(gen);
    EXPECT_NEAR(cf::sigmoid(v) + cf::sigmoid(-v), 1.0f, 1e-6f) << v;
  }
}

TEST(Softmax, EqualLogitsGiveUniform) {
  const auto p = cf::softmax(std::vector<double>{0, 0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, OneTwoThree) {
  // exp-normalize at 30 digits: 0.0900305731703805, 0.244728471054798, 0.665240955774822
  const auto p = cf::softmax(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(p[0], 0.0900305731703805, 1e-14);
  EXPECT_NEAR(p[1], 0.2447284710547977, 1e-14);
  EXPECT_NEAR(p[2], 0.6652409557748219, 1e-14);
}

TEST(Softmax, ShiftInvariance) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(1 + t % 9);
    for (auto& v : x) v = d(gen);
    const double c = d(gen) * 10;
    std::vector<double> y = x;
    for (auto& v : y) v += c;
    const auto px = cf::softmax(x), py = cf::softmax(y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(px[i], py[i], 1e-12);
  }
}

TEST(Softmax, EmptyInputIsAnError) {
  EXPECT_THROW((void)cf::softmax(std::vector<float>{}), cf::ArgumentError);
}

TEST(Softmax, SumsToOneAndStaysPositiveProperty) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<float> d(-50.f, 50.f);
  for (int t = 0; t < 500; ++t) {
    std::vector<float> x(1 + t % 80);
    for (auto& v : x) v = d(gen);
    const auto p = cf::softmax(x);
    double sum = 0;
    for (float v : p) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  EXPECT_EQ(cf::cross_entropy(std::vector<double>{1, 0, 0}, 0), 0.0);
}

TEST(CrossEntropy, UniformOverFiftySeven) {
  const std::vector<double> p(57, 1.0 / 57);
  EXPECT_NEAR(cf::cross_entropy(p, 31), 4.04305126783455, 1e-12);
}

TEST(CrossEntropy, HalfProbabilityIsLnTwo) {
  EXPECT_NEAR(cf::cross_entropy(std::vector<double>{0.5, 0.25, 0.25}, 0), 0.693147180559945, 1e-14);
}

TEST(CrossEntropy, ZeroProbabilityIsClamped) {
  EXPECT_NEAR(cf::cross_entropy(std::vector<double>{1, 0}, 1), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, TargetOutOfRange) {
  EXPECT_THROW((void)cf::cross_entropy(std::vector<float>{0.5f, 0.5f}, 2), cf::IndexError);
}

TEST(CrossEntropy, NonNegativeAndZeroOnlyAtCertainty) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> x(2 + t % 6);
    for (auto& v : x) v = d(gen);
    const auto p = cf::softmax(x);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double ce = cf::cross_entropy(p, k);
      EXPECT_GE(ce, 0.0);
      EXPECT_EQ(ce == 0.0, p[k] == 1.0);
    }
  }
}
