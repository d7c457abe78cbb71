#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "fedsg/error.hpp"
#include "fedsg/linalg.hpp"
#include "oracles.hpp"

namespace {

using fedsg::DataMatrix;

void expect_error(const std::function<void()>& fn, fedsg::ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "expected " << fedsg::to_string(code);
  } catch (const fedsg::Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(FrobeniusNorm, Identity) {
  EXPECT_NEAR(fedsg::frobenius_norm(DataMatrix::Identity(2, 2)), std::sqrt(2.0), 1e-15);
}

TEST(FrobeniusNorm, Zero) { EXPECT_EQ(fedsg::frobenius_norm(DataMatrix::Zero(3, 4)), 0.0); }

TEST(FrobeniusNorm, ThreeFourFive) {
  DataMatrix m(2, 2);
  m << 3, 0, 0, 4;
  EXPECT_DOUBLE_EQ(fedsg::frobenius_norm(m), 5.0);
}

TEST(FrobeniusNorm, NoOverflowOnHugeEntries) {
  DataMatrix m = DataMatrix::Constant(2, 2, 1e200);
  EXPECT_NEAR(fedsg::frobenius_norm(m) / 2e200, 1.0, 1e-14);
}

TEST(FrobeniusNorm, MatchesSumOfSquares) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const DataMatrix m = oracle::gaussian(7, 5, rng);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) sum += m.data()[i] * m.data()[i];
    EXPECT_NEAR(fedsg::frobenius_norm(m), std::sqrt(sum), 1e-13);
  }
}

TEST(RequireValid, RejectsNonFiniteAndEmpty) {
  DataMatrix m = DataMatrix::Zero(2, 2);
  m(1, 1) = std::nan("");
  expect_error([&] { fedsg::require_valid(m, "m"); }, fedsg::ErrorCode::kInvalidArgument);
  expect_error([&] { fedsg::require_valid(DataMatrix(0, 3), "m"); }, fedsg::ErrorCode::kInvalidArgument);
}

TEST(ThinQr, OrthonormalInputIsFixed) {
  std::mt19937_64 rng(1);
  const DataMatrix a = oracle::orthonormal(6, 3, rng);
  // Make the representative satisfy the positive-diagonal convention.
  const auto qr = fedsg::thin_qr(a);
  const auto again = fedsg::thin_qr(qr.q);
  EXPECT_LE((again.q - qr.q).norm(), 1e-12);
  EXPECT_LE((again.r - DataMatrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(ThinQr, ScaledOrthogonalColumns) {
  DataMatrix m(3, 2);
  m << 2, 0, 0, 0, 0, 3;
  const auto qr = fedsg::thin_qr(m);
  DataMatrix q(3, 2);
  q << 1, 0, 0, 0, 0, 1;
  DataMatrix r(2, 2);
  r << 2, 0, 0, 3;
  EXPECT_LE((qr.q - q).norm(), 1e-15);
  EXPECT_LE((qr.r - r).norm(), 1e-15);
}

TEST(ThinQr, NegativeColumnsGetPositiveDiagonal) {
  DataMatrix m(3, 2);
  m << -2, 0, 0, 0, 0, -3;
  const auto qr = fedsg::thin_qr(m);
  EXPECT_GT(qr.r(0, 0), 0.0);
  EXPECT_GT(qr.r(1, 1), 0.0);
  EXPECT_LE((qr.q * qr.r - m).norm(), 1e-14);
}

TEST(ThinQr, RandomReconstructionAndFeasibility) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(seed % 8);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(seed % 3);
    const DataMatrix m = oracle::gaussian(n, k, rng);
    const auto qr = fedsg::thin_qr(m);
    ASSERT_EQ(qr.q.rows(), n);
    ASSERT_EQ(qr.q.cols(), k);
    EXPECT_LE((qr.q * qr.r - m).norm(), 1e-10 * m.norm());
    EXPECT_LE(fedsg::orthonormality_defect(qr.q), 1e-10);
    for (Eigen::Index i = 0; i < k; ++i) {
      EXPECT_GT(qr.r(i, i), 0.0);
      for (Eigen::Index j = 0; j < i; ++j) EXPECT_EQ(qr.r(i, j), 0.0);
    }
  }
}

TEST(ThinQr, Deterministic) {
  std::mt19937_64 rng(9);
  const DataMatrix m = oracle::gaussian(12, 4, rng);
  const auto a = fedsg::thin_qr(m);
  const auto b = fedsg::thin_qr(m);
  EXPECT_EQ(std::memcmp(a.q.data(), b.q.data(), sizeof(double) * static_cast<std::size_t>(a.q.size())), 0);
  EXPECT_EQ(std::memcmp(a.r.data(), b.r.data(), sizeof(double) * static_cast<std::size_t>(a.r.size())), 0);
}

TEST(ThinQr, RankDeficient) {
  DataMatrix m(4, 2);
  m << 1, 2, 2, 4, 3, 6, 4, 8;
  expect_error([&] { fedsg::thin_qr(m); }, fedsg::ErrorCode::kRankDeficient);
  expect_error([&] { fedsg::thin_qr(DataMatrix::Zero(4, 2)); }, fedsg::ErrorCode::kRankDeficient);
}

TEST(ThinQr, WideInputRejected) {
  expect_error([&] { fedsg::thin_qr(DataMatrix::Ones(2, 3)); }, fedsg::ErrorCode::kShapeMismatch);
}

TEST(TruncatedSvd, Diagonal) {
  DataMatrix m = DataMatrix::Zero(3, 3);
  m.diagonal() << 5, 3, 1;
  const auto svd = fedsg::truncated_svd(m, 2);
  EXPECT_NEAR(svd.sigma(0), 5.0, 1e-12);
  EXPECT_NEAR(svd.sigma(1), 3.0, 1e-12);
  const DataMatrix approx = svd.u * svd.sigma.asDiagonal() * svd.v.transpose();
  EXPECT_NEAR((m - approx).norm(), 1.0, 1e-12);
}

TEST(TruncatedSvd, FullRankReconstructs) {
  std::mt19937_64 rng(4);
  for (auto [r, c] : {std::pair{5, 5}, std::pair{7, 4}, std::pair{4, 9}}) {
    const DataMatrix m = oracle::gaussian(r, c, rng);
    const auto k = static_cast<std::size_t>(std::min(r, c));
    const auto svd = fedsg::truncated_svd(m, k);
    EXPECT_LE((m - svd.u * svd.sigma.asDiagonal() * svd.v.transpose()).norm(), 1e-8 * m.norm());
  }
}

TEST(TruncatedSvd, OracleSelfCheck) {
  std::mt19937_64 rng(5);
  const DataMatrix m = oracle::gaussian(10, 8, rng);
  const auto a = oracle::singular_values(m);
  const auto b = oracle::singular_values_eigen(m);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_LE((a - b).norm(), 1e-10 * b(0));
}

TEST(TruncatedSvd, Random10x8MatchesOracleTail) {
  std::mt19937_64 rng(6);
  const DataMatrix m = oracle::gaussian(10, 8, rng);
  const auto svd = fedsg::truncated_svd(m, 3);
  const double residual = (m - svd.u * svd.sigma.asDiagonal() * svd.v.transpose()).norm();
  const double tail = oracle::tail_norm(oracle::singular_values(m), 3);
  EXPECT_LE(std::abs(residual - tail), 1e-8 * tail);
}

TEST(TruncatedSvd, OptimalityAcrossShapes) {
  std::uint64_t seed = 100;
  for (Eigen::Index rows = 5; rows <= 12; ++rows) {
    for (Eigen::Index cols = 5; cols <= 12; ++cols) {
      std::mt19937_64 rng(seed++);
      const DataMatrix m = oracle::gaussian(rows, cols, rng);
      const auto sigma = oracle::singular_values(m);
      for (std::size_t k = 1; k <= 3; ++k) {
        const auto svd = fedsg::truncated_svd(m, k);
        const double residual = (m - svd.u * svd.sigma.asDiagonal() * svd.v.transpose()).norm();
        const double tail = oracle::tail_norm(sigma, static_cast<Eigen::Index>(k));
        EXPECT_LE(std::abs(residual - tail), 1e-8 * tail) << rows << "x" << cols << " k=" << k;
        EXPECT_LE(fedsg::orthonormality_defect(svd.u), 1e-10);
        EXPECT_LE(fedsg::orthonormality_defect(svd.v), 1e-10);
        for (Eigen::Index j = 1; j < svd.sigma.size(); ++j) EXPECT_GE(svd.sigma(j - 1), svd.sigma(j));
        EXPECT_GE(svd.sigma(svd.sigma.size() - 1), 0.0);
      }
    }
  }
}

TEST(TruncatedSvd, RankDeficientInputStillOrthonormal) {
  std::mt19937_64 rng(8);
  const DataMatrix m = oracle::gaussian(8, 2, rng) * oracle::gaussian(2, 6, rng);
  const auto svd = fedsg::truncated_svd(m, 4);
  EXPECT_LE(fedsg::orthonormality_defect(svd.u), 1e-10);
  EXPECT_LE(fedsg::orthonormality_defect(svd.v), 1e-10);
  EXPECT_NEAR(svd.sigma(2), 0.0, 1e-10 * svd.sigma(0));
  EXPECT_LE((m - svd.u * svd.sigma.asDiagonal() * svd.v.transpose()).norm(), 1e-10 * m.norm());
}

TEST(TruncatedSvd, ZeroMatrix) {
  const auto svd = fedsg::truncated_svd(DataMatrix::Zero(5, 4), 2);
  EXPECT_EQ(svd.sigma.norm(), 0.0);
  EXPECT_LE(fedsg::orthonormality_defect(svd.u), 1e-10);
  EXPECT_LE(fedsg::orthonormality_defect(svd.v), 1e-10);
}

TEST(TruncatedSvd, InvalidRank) {
  const DataMatrix m = DataMatrix::Ones(3, 4);
  expect_error([&] { fedsg::truncated_svd(m, 0); }, fedsg::ErrorCode::kInvalidArgument);
  expect_error([&] { fedsg::truncated_svd(m, 4); }, fedsg::ErrorCode::kInvalidArgument);
}

}  // namespace
