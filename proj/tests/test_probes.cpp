#include "embgeo/probes.hpp"
#include "embgeo/synth.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace embgeo;

namespace {

Matrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = g(rng);
  return x;
}

}  // namespace

TEST(Ridge, RecoversPlantedDirection) {
  const Matrix x = gaussian(1000, 8, 1);
  const Vector y = x.col(0);
  const auto m = fit_ridge_probe(x, y, 1.0);
  EXPECT_FALSE(m.zero_direction);
  EXPECT_GT(std::abs(m.direction[0]), 0.99);
  EXPECT_GT(m.r2, 0.99);
  EXPECT_NEAR(m.direction.norm(), 1.0, 1e-9);
  EXPECT_LE(m.r2, 1.0);
}

TEST(Ridge, ConstantTargetFlagsZeroDirection) {
  const Matrix x = gaussian(20, 3, 2);
  const auto m = fit_ridge_probe(x, Vector::Constant(20, 4.5));
  EXPECT_TRUE(m.zero_direction);
  EXPECT_EQ(m.direction.norm(), 0.0);
  EXPECT_EQ(m.r2, 0.0);
  EXPECT_EQ(m.intercept, 4.5);
}

TEST(Ridge, ThreePointClosedForm) {
  Matrix x(3, 2);
  x << 1, 2, 3, 1, 0, 4;
  Vector y(3);
  y << 1, 2, 3;
  const double alpha = 0.5;
  // Centered by hand: column means (4/3, 7/3), y mean 2.
  const double c[3][2] = {{1 - 4.0 / 3, 2 - 7.0 / 3}, {3 - 4.0 / 3, 1 - 7.0 / 3}, {0 - 4.0 / 3, 4 - 7.0 / 3}};
  const double yc[3] = {-1, 0, 1};
  double a11 = alpha, a12 = 0, a22 = alpha, b1 = 0, b2 = 0;
  for (int i = 0; i < 3; ++i) {
    a11 += c[i][0] * c[i][0];
    a12 += c[i][0] * c[i][1];
    a22 += c[i][1] * c[i][1];
    b1 += c[i][0] * yc[i];
    b2 += c[i][1] * yc[i];
  }
  const double det = a11 * a22 - a12 * a12;
  const double beta1 = (a22 * b1 - a12 * b2) / det;
  const double beta2 = (a11 * b2 - a12 * b1) / det;
  const auto m = fit_ridge_probe(x, y, alpha);
  EXPECT_NEAR(m.coefficients[0], beta1, 1e-9);
  EXPECT_NEAR(m.coefficients[1], beta2, 1e-9);
  EXPECT_NEAR(m.intercept, 2.0 - (4.0 / 3) * beta1 - (7.0 / 3) * beta2, 1e-9);
}

TEST(Ridge, TinyAlphaMatchesLeastSquares) {
  const Matrix x = gaussian(200, 5, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y[i] = 0.3 * x(i, 0) - 2.0 * x(i, 3) + x(i, 4) + 0.5 * g(rng) + 7.0;
  Matrix design(200, 6);
  design << x, Vector::Ones(200);
  const Vector ls = design.colPivHouseholderQr().solve(y);
  const Vector beta = ls.head(5);
  const auto m = fit_ridge_probe(x, y, 1e-8);
  EXPECT_GT(std::abs(m.direction.dot(beta.normalized())), 0.999);
}

TEST(Ridge, ShiftInTargetLeavesDirection) {
  const Matrix x = gaussian(100, 4, 5);
  const Vector y = x.col(1) + 0.2 * x.col(2);
  const auto a = fit_ridge_probe(x, y);
  const auto b = fit_ridge_probe(x, (y.array() + 100.0).matrix());
  EXPECT_NEAR((a.direction - b.direction).norm(), 0.0, 1e-9);
}

TEST(Ridge, RejectsBadInput) {
  EXPECT_THROW(fit_ridge_probe(Matrix::Zero(1, 2), Vector::Zero(1)), DataError);
  EXPECT_THROW(fit_ridge_probe(Matrix::Zero(3, 2), Vector::Zero(2)), DataError);
  Vector y(3);
  y << 1, std::nan(""), 2;
  EXPECT_THROW(fit_ridge_probe(gaussian(3, 2, 1), y), DataError);
}

TEST(PcSelection, ExactScoreSelectsThatComponent) {
  const Matrix x = gaussian(50, 4, 6);
  const Matrix basis = Matrix::Identity(4, 4);
  std::vector<double> cov(50);
  for (int i = 0; i < 50; ++i) cov[static_cast<std::size_t>(i)] = x(i, 0);
  const auto s = select_pc_direction(x, basis, cov, 4);
  EXPECT_EQ(s.pc_index, 0u);
  EXPECT_NEAR(s.correlation, 1.0, 1e-12);
  EXPECT_NEAR(s.direction[0], 1.0, 1e-12);
}

TEST(PcSelection, TieGoesToLowerIndex) {
  Matrix x(4, 3);
  x << 1, 1, 0, 2, 2, 1, 3, 3, 0, 4, 4, 1;
  std::vector<double> cov = {1, 2, 3, 4};
  const auto s = select_pc_direction(x, Matrix::Identity(3, 3), cov, 3);
  EXPECT_EQ(s.pc_index, 0u);
}

TEST(PcSelection, OrthogonalCovariateStillReturned) {
  const Matrix x = gaussian(400, 6, 7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> cov(400);
  for (auto& v : cov) v = g(rng);
  const auto s = select_pc_direction(x, Matrix::Identity(6, 6), cov, 3);
  EXPECT_LT(std::abs(s.correlation), 0.2);
  EXPECT_LT(s.pc_index, 3u);
}

TEST(PcSelection, SignFlipInvariant) {
  const Matrix x = gaussian(60, 5, 9);
  std::vector<double> cov(60);
  for (int i = 0; i < 60; ++i) cov[static_cast<std::size_t>(i)] = -x(i, 2) + 0.1 * x(i, 1);
  Matrix basis = Matrix::Identity(5, 5);
  const auto a = select_pc_direction(x, basis, cov, 5);
  basis.col(2) *= -1.0;
  basis.col(1) *= -1.0;
  const auto b = select_pc_direction(x, basis, cov, 5);
  EXPECT_EQ(a.pc_index, b.pc_index);
  EXPECT_NEAR((a.direction - b.direction).norm(), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(a.correlation), std::abs(b.correlation), 1e-12);
}

TEST(PcSelection, Errors) {
  const Matrix x = gaussian(10, 3, 1);
  std::vector<double> flat(10, 2.0);
  EXPECT_THROW(select_pc_direction(x, Matrix::Identity(3, 3), flat, 2), DataError);
  std::vector<double> cov(10);
  for (int i = 0; i < 10; ++i) cov[static_cast<std::size_t>(i)] = i;
  EXPECT_THROW(select_pc_direction(x, Matrix::Identity(3, 3), cov, 4), ConfigError);
}

TEST(Stability, IdenticalModelsGiveOne) {
  Vector u = Vector::Zero(6);
  u[2] = 1.0;
  std::vector<ProbeModel> models(4);
  for (std::size_t i = 0; i < models.size(); ++i) {
    models[i].property = "p";
    models[i].direction = u;
    models[i].scale = i == 0 ? ProbeScale::global : ProbeScale::local;
  }
  models[3].direction = -u;
  const auto s = direction_stability(models);
  EXPECT_EQ(s.local_global.count, 3u);
  EXPECT_DOUBLE_EQ(s.local_global.median, 1.0);
  EXPECT_DOUBLE_EQ(s.local_pairwise.mean, 1.0);
}

TEST(Stability, ZeroDirectionsExcludedAndCounted) {
  std::vector<ProbeModel> models(3);
  for (auto& m : models) {
    m.property = "p";
    m.direction = Vector::Unit(3, 0);
    m.scale = ProbeScale::local;
  }
  models[0].scale = ProbeScale::global;
  models[2].zero_direction = true;
  models[2].direction = Vector::Zero(3);
  const auto s = direction_stability(models);
  EXPECT_EQ(s.excluded_zero, 1u);
  EXPECT_EQ(s.local_global.count, 1u);
}

TEST(Stability, MixedPropertiesRejected) {
  std::vector<ProbeModel> models(2);
  models[0].property = "a";
  models[1].property = "b";
  for (auto& m : models) m.direction = Vector::Unit(2, 0);
  EXPECT_THROW(direction_stability(models), DataError);
}

TEST(Stability, FlatOracleLocalMatchesGlobal) {
  ManifoldSpec spec;
  spec.kind = ManifoldKind::flat_subspace;
  spec.d = 3;
  spec.D = 32;
  spec.n = 4000;
  spec.scale = 10.0;
  spec.seed = 11;
  auto base = generate_manifold(spec);
  const Vector u = base.oracle.frames[0].col(0);
  auto res = attach_planted_properties(std::move(base), {u}, 0.0, 12, {"p"});
  KnnIndex index(res.dataset);
  std::vector<std::size_t> sources = sample_rows(res.dataset.size(), 40, 13);
  ProbeSuiteOptions opt;
  opt.seed = 14;
  const auto suite = fit_probe_suite(res.dataset, index, {"p"}, {}, sources, opt);
  ASSERT_EQ(suite.stability.size(), 1u);
  EXPECT_GT(suite.stability[0].local_global.median, 0.9);
  EXPECT_EQ(suite.models.size(), 41u);
}
