#include <vkde/linalg.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace vkde;

TEST(SqrtSpd, Identity)
{
  EXPECT_LT((sqrt_spd(identity(3)) - identity(3)).norm(), 1e-15);
}

TEST(SqrtSpd, Diagonal)
{
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 4.0;
  m(1, 1) = 9.0;
  const Mat s = sqrt_spd(m);
  EXPECT_NEAR(s(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(s(1, 1), 3.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-15);
}

TEST(SqrtSpd, ReconstructsRandomSpd)
{
  oracle::Random rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rep % kMaxDim;
    const Mat m = rng.spd(d, 2.0, 0.05);
    const Mat s = sqrt_spd(m);
    EXPECT_LT(rel_frobenius(s * s, m), 1e-12);
    EXPECT_LT((s - s.transpose()).norm(), 1e-15 * s.norm());
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(SqrtSpd, ClampsTinyNegativeEigenvalue)
{
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1e-14;
  const Mat s = sqrt_spd(m);
  EXPECT_GT(s(1, 1), 0.0);
}

TEST(SqrtSpd, IndefiniteThrowsWithEigenvalues)
{
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -0.5;
  try {
    sqrt_spd(m);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("-0.5"), std::string::npos);
  }
}

TEST(Delta4Contraction, ZeroBandwidthGivesZero)
{
  Tensor4 t(2);
  t(0, 0, 0, 0) = 3.0;
  t(0, 1, 0, 1) = -1.0;
  EXPECT_EQ(contract_delta4(t, Mat::Zero(2, 2)), 0.0);
}

TEST(Delta4Contraction, EvenInBandwidth)
{
  oracle::Random rng(5);
  Tensor4 t(2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
          t(i, j, k, l) = rng.uniform(-1, 1);
  const Mat h = rng.spd(2);
  EXPECT_NEAR(contract_delta4(t, h), contract_delta4(t, -h), 1e-12);
}
