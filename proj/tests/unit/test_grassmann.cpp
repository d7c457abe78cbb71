#include <gtest/gtest.h>

#include "fedsg/error.hpp"
#include "fedsg/grassmann.hpp"
#include "fedsg/objective.hpp"
#include "oracles.hpp"

namespace {

using fedsg::DataMatrix;
using fedsg::GrassmannPoint;

GrassmannPoint random_point(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  return GrassmannPoint(oracle::orthonormal(n, k, rng));
}

TEST(GrassmannPoint, RejectsInfeasibleBasis) {
  EXPECT_THROW(GrassmannPoint(DataMatrix::Ones(4, 2)), fedsg::Error);
  EXPECT_THROW(GrassmannPoint(DataMatrix::Identity(3, 3)), fedsg::Error);  // k == n
  try {
    GrassmannPoint p(DataMatrix::Ones(4, 2));
  } catch (const fedsg::Error& e) {
    EXPECT_EQ(e.code(), fedsg::ErrorCode::kInfeasiblePoint);
  }
}

TEST(ProjectTangent, BasisMapsToZero) {
  std::mt19937_64 rng(1);
  const auto a = random_point(8, 3, rng);
  EXPECT_LE(fedsg::project_tangent(a, a.basis()).norm(), 1e-12);
}

TEST(ProjectTangent, OrthogonalDirectionUnchanged) {
  std::mt19937_64 rng(2);
  const DataMatrix full = oracle::orthonormal(8, 6, rng);
  const GrassmannPoint a(full.leftCols(3));
  const DataMatrix g = full.rightCols(3) * oracle::gaussian(3, 3, rng);
  EXPECT_LE((fedsg::project_tangent(a, g) - g).norm(), 1e-12);
}

TEST(ProjectTangent, OutputIsTangent) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto a = random_point(8, 3, rng);
    const DataMatrix g = oracle::gaussian(8, 3, rng);
    EXPECT_LE((a.basis().transpose() * fedsg::project_tangent(a, g)).norm(), 1e-9);
  }
}

TEST(ProjectTangent, ShapeMismatch) {
  std::mt19937_64 rng(3);
  const auto a = random_point(8, 3, rng);
  try {
    fedsg::project_tangent(a, DataMatrix::Zero(8, 2));
    ADD_FAILURE();
  } catch (const fedsg::Error& e) {
    EXPECT_EQ(e.code(), fedsg::ErrorCode::kShapeMismatch);
  }
}

TEST(Retract, OrthonormalInputFixed) {
  std::mt19937_64 rng(4);
  const auto a = fedsg::retract(oracle::gaussian(7, 3, rng));
  EXPECT_LE((fedsg::retract(a.basis()).basis() - a.basis()).norm(), 1e-13);
}

TEST(Retract, QrUniqueness) {
  std::mt19937_64 rng(5);
  const auto a = fedsg::retract(oracle::gaussian(7, 3, rng));
  DataMatrix r(3, 3);
  r << 2.0, 0.3, -1.0, 0.0, 0.5, 0.7, 0.0, 0.0, 4.0;
  EXPECT_LE((fedsg::retract(a.basis() * r).basis() - a.basis()).norm(), 1e-12);
}

TEST(Retract, SpanMatchesExplicitProjector) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const DataMatrix m = oracle::gaussian(10, 3, rng);
    const auto q = fedsg::retract(m);
    EXPECT_LE((q.basis() * q.basis().transpose() - oracle::explicit_projector(m)).norm(), 1e-8);
    EXPECT_LE(fedsg::orthonormality_defect(q.basis()), 1e-8);
  }
}

TEST(Retract, RankDeficientPropagates) {
  DataMatrix m = DataMatrix::Zero(5, 2);
  m.col(0).setOnes();
  m.col(1).setOnes();
  try {
    fedsg::retract(m);
    ADD_FAILURE();
  } catch (const fedsg::Error& e) {
    EXPECT_EQ(e.code(), fedsg::ErrorCode::kRankDeficient);
  }
}

TEST(RiemannianStep, ZeroGradient) {
  std::mt19937_64 rng(6);
  const auto a = fedsg::retract(oracle::gaussian(8, 3, rng));
  const auto b = fedsg::riemannian_step(a, DataMatrix::Zero(8, 3), 0.1);
  EXPECT_LE((b.basis() - a.basis()).norm(), 1e-13);
}

TEST(RiemannianStep, NormalGradientIgnored) {
  std::mt19937_64 rng(7);
  const auto a = fedsg::retract(oracle::gaussian(8, 3, rng));
  const auto b = fedsg::riemannian_step(a, a.basis(), 0.5);
  EXPECT_LE((b.basis() - a.basis()).norm(), 1e-9);
}

TEST(RiemannianStep, RejectsNonPositiveEta) {
  std::mt19937_64 rng(8);
  const auto a = random_point(8, 3, rng);
  EXPECT_THROW(fedsg::riemannian_step(a, DataMatrix::Zero(8, 3), 0.0), fedsg::Error);
  EXPECT_THROW(fedsg::riemannian_step(a, DataMatrix::Zero(8, 3), -1.0), fedsg::Error);
}

TEST(RiemannianStep, DescentOnObjective) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    DataMatrix x = oracle::gaussian(8, 6, rng);
    x /= x.norm();
    const std::vector<DataMatrix> shards{x};
    const auto u = random_point(8, 2, rng);
    const auto v = random_point(6, 2, rng);
    const double before = fedsg::loss(u, v, shards);
    const auto u_next = fedsg::riemannian_step(u, fedsg::grad_u(u, v, shards), 1e-4);
    EXPECT_LE(fedsg::loss(u_next, v, shards), before + 1e-12);
    const auto v_next = fedsg::riemannian_step(v, fedsg::grad_v(u, v, shards), 1e-4);
    EXPECT_LE(fedsg::loss(u, v_next, shards), before + 1e-12);
  }
}

TEST(RiemannianStep, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(11);
  const std::vector<DataMatrix> shards{oracle::gaussian(8, 6, rng)};
  const auto u = random_point(8, 3, rng);
  const auto v = random_point(6, 3, rng);
  const double before = fedsg::loss(u, v, shards);
  const auto next = fedsg::riemannian_step(u, fedsg::grad_u(u, v, shards), 1e-6);
  EXPECT_LT(fedsg::loss(next, v, shards), before);
}

TEST(Procrustes, RecoversRotation) {
  std::mt19937_64 rng(12);
  const DataMatrix a = oracle::orthonormal(9, 3, rng);
  const DataMatrix q = oracle::orthogonal(3, rng);
  const DataMatrix rotation = fedsg::procrustes_rotation(a * q, a);
  EXPECT_LE((a * q * rotation - a).norm(), 1e-10);
  EXPECT_LE((rotation.transpose() * rotation - DataMatrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(ProjectorDistance, InvariantToBasisChoice) {
  std::mt19937_64 rng(13);
  const DataMatrix a = oracle::orthonormal(9, 3, rng);
  EXPECT_LE(fedsg::projector_distance(a, a * oracle::orthogonal(3, rng)), 1e-12);
  EXPECT_GT(fedsg::projector_distance(a, oracle::orthonormal(9, 3, rng)), 0.1);
}

}  // namespace
