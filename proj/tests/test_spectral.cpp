#include "embgeo/clustering.hpp"
#include "embgeo/spectral.hpp"
#include "embgeo/synth.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace embgeo;
using embgeo::testing::make_dataset;

TEST(ParticipationRatio, HandValues) {
  EXPECT_NEAR(participation_ratio(std::vector<double>{1, 1, 1, 1}), 4.0, 1e-12);
  EXPECT_NEAR(participation_ratio(std::vector<double>{3, 1}), 1.6, 1e-12);
  EXPECT_NEAR(participation_ratio(std::vector<double>{2, 0, 0}), 1.0, 1e-12);
  EXPECT_NEAR(participation_ratio(std::vector<double>{30, 10}), 1.6, 1e-12);
  EXPECT_THROW(participation_ratio(std::vector<double>{0, 0}), DataError);
  EXPECT_THROW(participation_ratio(std::vector<double>{1, -0.5}), DataError);
}

TEST(Covariance, FourRowHandTable) {
  const auto ds = make_dataset({{1, 2}, {2, 4}, {3, 5}, {6, 1}});
  const Matrix c = covariance_matrix(ds);
  // means 3 and 3; deviations (-2,-1,0,3) and (-1,1,2,-2)
  EXPECT_NEAR(c(0, 0), (4 + 1 + 0 + 9) / 3.0, 1e-12);
  EXPECT_NEAR(c(1, 1), (1 + 1 + 4 + 4) / 3.0, 1e-12);
  EXPECT_NEAR(c(0, 1), (2 - 1 + 0 - 6) / 3.0, 1e-12);
  EXPECT_EQ(c(0, 1), c(1, 0));
  EXPECT_THROW(covariance_matrix(make_dataset({{1, 2}})), DataError);
}

TEST(Covariance, ThreadCountDoesNotChangeResult) {
  const auto ds = embgeo::testing::random_dataset(400, 12, 5);
  EXPECT_EQ(covariance_matrix(ds, 1), covariance_matrix(ds, 4));
  EXPECT_EQ(spearman_matrix(ds, 1), spearman_matrix(ds, 3));
}

TEST(Spearman, MonotoneAndIndependent) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> rows(10000, std::vector<double>(3));
  for (auto& r : rows) {
    r[0] = g(rng);
    r[1] = r[0] * r[0] * r[0];
    r[2] = g(rng);
  }
  const Matrix s = spearman_matrix(make_dataset(rows));
  EXPECT_NEAR(s(0, 1), 1.0, 1e-9);
  EXPECT_LT(std::abs(s(0, 2)), 0.05);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(s(i, i), 1.0);
}

TEST(Spearman, AverageRanksOnTies) {
  const std::vector<double> v = {10, 20, 20, 5};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Eigen, IdentityAndDiagonal) {
  const auto id = eigendecompose(Matrix::Identity(3, 3));
  EXPECT_NEAR(id.participation_ratio, 3.0, 1e-12);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 1;
  const auto e = eigendecompose(d);
  EXPECT_NEAR(e.eigenvalues[0], 2.0, 1e-12);
  EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-12);
  EXPECT_NEAR(e.eigenvectors(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(e.eigenvectors(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(e.participation_ratio, 1.8, 1e-12);
  EXPECT_NEAR(e.variance_fraction[0], 2.0 / 3.0, 1e-12);
}

TEST(Eigen, RandomSymmetricReconstruction) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  Matrix a(6, 6);
  for (int i = 0; i < 36; ++i) a.data()[i] = g(rng);
  const Matrix m = a * a.transpose();
  const auto e = eigendecompose(m);
  const Matrix rec = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
  EXPECT_LT((rec - m).norm(), 1e-8);
  EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(6, 6)).norm(), 1e-8);
  for (int i = 0; i < 6; ++i) {
    EXPECT_LT((m * e.eigenvectors.col(i) - e.eigenvalues[i] * e.eigenvectors.col(i)).norm(), 1e-7 * e.eigenvalues[0]);
    if (i) {
      EXPECT_GE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    }
    // sign convention: largest-magnitude component positive
    Eigen::Index arg;
    e.eigenvectors.col(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(e.eigenvectors(arg, i), 0.0);
  }
  Matrix asym = m;
  asym(0, 1) += 1.0;
  EXPECT_THROW(eigendecompose(asym), DataError);
}

TEST(PrincipalAngles, Basic) {
  const Matrix I = Matrix::Identity(4, 4);
  const Matrix u = I.leftCols(2);
  for (double a : subspace_principal_angles(u, u)) EXPECT_NEAR(a, 0.0, 1e-6);
  for (double a : subspace_principal_angles(u, I.rightCols(2))) EXPECT_NEAR(a, 90.0, 1e-9);
  Matrix w(4, 1);
  w << 1, 1, 0, 0;
  w /= std::sqrt(2.0);
  EXPECT_NEAR(subspace_principal_angles(I.leftCols(1), w)[0], 45.0, 1e-9);
  EXPECT_THROW(subspace_principal_angles(2.0 * u, u), DataError);
}

TEST(Census, Pairs) {
  const Matrix id = Matrix::Identity(64, 64);
  EXPECT_EQ(count_correlated_pairs(id, 0.5).count, 0u);
  EXPECT_EQ(count_correlated_pairs(id, 0.5).total, 2016u);
  Matrix c = Matrix::Identity(5, 5);
  c(1, 3) = c(3, 1) = 0.9;
  EXPECT_EQ(count_correlated_pairs(c, 0.5).count, 1u);
}

TEST(PcaProject, VariancesMatchEigenvalues) {
  const auto ds = embgeo::testing::random_dataset(1000, 6, 21);
  const Matrix p = pca_project(ds, 3);
  const auto e = eigendecompose(covariance_matrix(ds));
  for (int j = 0; j < 3; ++j) {
    const double mean = p.col(j).mean();
    const double var = (p.col(j).array() - mean).square().sum() / 999.0;
    EXPECT_NEAR(var, e.eigenvalues[j], 1e-6 * e.eigenvalues[j]);
  }
}

TEST(PcaProject, PlanarDataReconstructs) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 30; ++i) {
    const double a = std::sin(i * 0.7), b = std::cos(i * 1.3) * 0.5;
    rows.push_back({a + b, a - b, 2 * a});
  }
  const auto ds = make_dataset(rows);
  const Matrix p = pca_project(ds, 2);
  const auto e = eigendecompose(covariance_matrix(ds));
  Matrix x = ds.embedding_matrix();
  x = x.rowwise() - x.colwise().mean();
  EXPECT_LT((p * e.top(2).transpose() - x).norm(), 1e-5);
}

TEST(YearStability, SameDistributionGivesSmallAngles) {
  ManifoldSpec spec;
  spec.kind = ManifoldKind::flat_subspace;
  spec.D = 20;
  spec.d = 5;
  spec.n = 7000;
  spec.axis_scales = {5, 4, 3, 2, 1};
  spec.seed = 2;
  spec.noise = 0.05;
  const auto base = generate_manifold(spec).dataset;
  std::vector<int> years(base.size());
  for (std::size_t i = 0; i < years.size(); ++i) years[i] = 2017 + static_cast<int>(i % 7);
  std::vector<float> v(base.vectors().begin(), base.vectors().end());
  const EmbeddingDataset ds(base.dims(), v, {base.lats().begin(), base.lats().end()},
                            {base.lons().begin(), base.lons().end()}, years, {}, {});
  const auto st = per_year_stability(ds, 5);
  EXPECT_EQ(st.years.size(), 7u);
  EXPECT_EQ(st.pairs.size(), 21u);
  std::vector<double> all;
  for (const auto& p : st.pairs) all.insert(all.end(), p.angles.begin(), p.angles.end());
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  EXPECT_LT(all[all.size() / 2], 15.0);
}

// ---------------------------------------------------------------------------

TEST(Ward, ThreePointsOnALine) {
  Matrix d(3, 3);
  d << 0, 1, 5, 1, 0, 4, 5, 4, 0;
  const auto m = ward_linkage(d);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].a, 0u);
  EXPECT_EQ(m[0].b, 1u);
  EXPECT_DOUBLE_EQ(m[0].height, 1.0);
  EXPECT_EQ(m[1].a, 2u);
  EXPECT_EQ(m[1].b, 3u);
  // Lance-Williams: sqrt((2*25 + 2*16 - 1*1) / 3)
  EXPECT_NEAR(m[1].height, std::sqrt(27.0), 1e-12);
  EXPECT_EQ(m[1].size, 3u);
  EXPECT_EQ(cut_tree(m, 3, 2), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(cut_tree(m, 3, 3), (std::vector<int>{0, 1, 2}));
}

TEST(Silhouette, MatchesDirectComputation) {
  const std::vector<double> pts = {0, 1, 5, 6, 6.5};
  const std::vector<int> labels = {0, 0, 1, 1, 1};
  Matrix d(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) d(i, j) = std::abs(pts[i] - pts[j]);
  double total = 0;
  for (int i = 0; i < 5; ++i) {
    double in = 0, out = 0;
    int nin = 0, nout = 0;
    for (int j = 0; j < 5; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        in += d(i, j);
        ++nin;
      } else {
        out += d(i, j);
        ++nout;
      }
    }
    const double a = in / nin, b = out / nout;
    total += (b - a) / std::max(a, b);
  }
  EXPECT_NEAR(silhouette_score(d, labels), total / 5.0, 1e-12);
}

TEST(ClusterDimensions, PlantedBlocks) {
  const int D = 12;
  Matrix c = Matrix::Zero(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) c(i, j) = (i == j) ? 1.0 : (i / 4 == j / 4 ? 0.9 : 0.0);
  const auto sweep = cluster_dimensions(c, 2, 10);
  EXPECT_EQ(sweep.best_k, 3u);
  const auto& labels = sweep.labels[sweep.best_k - 2];
  for (int i = 0; i < D; ++i) EXPECT_EQ(labels[i], labels[(i / 4) * 4]);
  EXPECT_THROW(cluster_dimensions(c, 1, 5), ConfigError);
  EXPECT_THROW(cluster_dimensions(c, 2, 12), ConfigError);
}

TEST(ClusterDimensions, IdentityIsDegenerateButFine) {
  const auto sweep = cluster_dimensions(Matrix::Identity(6, 6), 2, 5);
  EXPECT_EQ(sweep.ks.size(), 4u);
  for (double s : sweep.silhouette) EXPECT_TRUE(std::isfinite(s));
}
