#include "embgeo/spectral.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace embgeo {

Matrix covariance_matrix(const Matrix& x, int threads) {
  if (x.rows() < 2) throw DataError("covariance needs at least 2 rows");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Eigen::Index d = x.cols();
  Matrix c(d, d);
  parallel_for(static_cast<std::size_t>(d), threads, [&](std::size_t a) {
    const auto col = static_cast<Eigen::Index>(a);
    c.col(col) = centered.transpose() * centered.col(col);
  });
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b) c(b, a) = c(a, b);
  return c / static_cast<double>(x.rows() - 1);
}

Matrix covariance_matrix(const EmbeddingDataset& ds, int threads) {
  return covariance_matrix(ds.embedding_matrix(), threads);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

Matrix correlation_matrix(const Matrix& x, int threads) {
  if (x.rows() < 2) throw DataError("correlation needs at least 2 rows");
  Matrix c = covariance_matrix(x, threads);
  const Eigen::Index d = c.rows();
  Vector sd(d);
  for (Eigen::Index a = 0; a < d; ++a) sd[a] = std::sqrt(std::max(c(a, a), 0.0));
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      if (a == b) {
        c(a, b) = 1.0;
      } else if (sd[a] > 0.0 && sd[b] > 0.0) {
        c(a, b) = std::clamp(c(a, b) / (sd[a] * sd[b]), -1.0, 1.0);
      } else {
        c(a, b) = 0.0;
      }
    }
  }
  return c;
}

Matrix spearman_matrix(const Matrix& x, int threads) {
  if (x.rows() < 2) throw DataError("Spearman correlation needs at least 2 rows");
  Matrix ranks(x.rows(), x.cols());
  parallel_for(static_cast<std::size_t>(x.cols()), threads, [&](std::size_t j) {
    const auto col = static_cast<Eigen::Index>(j);
    const Vector column = x.col(col);
    const auto r = average_ranks(std::span<const double>(column.data(), column.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) ranks(i, col) = r[static_cast<std::size_t>(i)];
  });
  return correlation_matrix(ranks, threads);
}

Matrix spearman_matrix(const EmbeddingDataset& ds, int threads) {
  return spearman_matrix(ds.embedding_matrix(), threads);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("spearman: length mismatch");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

EigenSummary eigendecompose(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DataError("eigendecompose needs a square matrix");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw DataError("eigendecompose: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()));
  if (solver.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
  const Eigen::Index d = m.rows();
  EigenSummary out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index c = 0; c < d; ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < d; ++r) {
      const double a = std::abs(out.eigenvectors(r, c));
      // Near-ties resolve to the lowest index so the sign is stable across runs.
      if (a > best * (1.0 + 1e-12)) {
        best = a;
        arg = r;
      }
    }
    if (out.eigenvectors(arg, c) < 0.0) out.eigenvectors.col(c) *= -1.0;
  }
  const double total = out.eigenvalues.sum();
  out.variance_fraction = total != 0.0 ? Vector(out.eigenvalues / total) : Vector::Zero(d);
  Vector clamped = out.eigenvalues.cwiseMax(0.0);
  out.participation_ratio = clamped.sum() > 0.0 ? participation_ratio(clamped) : 0.0;
  return out;
}

double participation_ratio(std::span<const double> eigenvalues) {
  if (eigenvalues.empty()) throw DataError("participation ratio of an empty spectrum");
  const double top = *std::max_element(eigenvalues.begin(), eigenvalues.end());
  double s = 0.0, s2 = 0.0;
  for (double l : eigenvalues) {
    if (!std::isfinite(l)) throw DataError("non-finite eigenvalue");
    if (l < 0.0) {
      if (l < -1e-9 * std::abs(top)) throw DataError("negative eigenvalue in participation ratio");
      l = 0.0;
    }
    s += l;
    s2 += l * l;
  }
  if (!(s > 0.0)) throw DataError("participation ratio of an all-zero spectrum");
  return s * s / s2;
}

double participation_ratio(const Vector& eigenvalues) {
  return participation_ratio(
      std::span<const double>(eigenvalues.data(), static_cast<std::size_t>(eigenvalues.size())));
}

void require_orthonormal(const Matrix& frame, double tol) {
  const Matrix g = frame.transpose() * frame;
  const double err = (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
  if (err > tol) throw DataError("frame is not orthonormal (max |F^T F - I| = " + std::to_string(err) + ")");
}

std::vector<double> subspace_principal_angles(const Matrix& u, const Matrix& w) {
  if (u.rows() != w.rows() || u.cols() != w.cols()) {
    throw DataError("principal angles need frames of identical shape");
  }
  require_orthonormal(u);
  require_orthonormal(w);
  Eigen::JacobiSVD<Matrix> svd(u.transpose() * w);
  const Vector s = svd.singularValues();  // descending
  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    angles.push_back(std::acos(std::clamp(s[i], 0.0, 1.0)) * 180.0 / std::numbers::pi);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

PairCensus count_correlated_pairs(const Matrix& corr, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  PairCensus out;
  const Eigen::Index d = corr.rows();
  out.total = static_cast<std::size_t>(d * (d - 1) / 2);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b)
      if (std::abs(corr(a, b)) > threshold) ++out.count;
  return out;
}

Matrix pca_project(const Matrix& x, std::size_t n_components) {
  if (n_components > static_cast<std::size_t>(x.cols())) {
    throw ConfigError("n_components exceeds the embedding dimension");
  }
  const auto eig = eigendecompose(covariance_matrix(x));
  const Matrix centered = x.rowwise() - x.colwise().mean();
  return centered * eig.top(n_components);
}

Matrix pca_project(const EmbeddingDataset& ds, std::size_t n_components) {
  return pca_project(ds.embedding_matrix(), n_components);
}

YearStability per_year_stability(const EmbeddingDataset& ds, std::size_t top_p, int threads) {
  YearStability out;
  out.years = ds.distinct_years();
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) rows[ds.year(i)].push_back(i);
  if (top_p < 1 || top_p > ds.dims()) throw ConfigError("top_p must lie in [1, D]");
  out.per_year.resize(out.years.size());
  for (std::size_t y = 0; y < out.years.size(); ++y) {
    const auto& r = rows[out.years[y]];
    if (r.size() < 2) throw DataError("year " + std::to_string(out.years[y]) + " has fewer than 2 rows");
    out.per_year[y] = eigendecompose(covariance_matrix(ds.embedding_matrix(r), threads));
  }
  for (std::size_t a = 0; a < out.years.size(); ++a) {
    for (std::size_t b = a + 1; b < out.years.size(); ++b) {
      out.pairs.push_back({out.years[a], out.years[b],
                           subspace_principal_angles(out.per_year[a].top(top_p),
                                                     out.per_year[b].top(top_p))});
    }
  }
  return out;
}

Matrix dimension_variable_correlations(const EmbeddingDataset& ds, int threads) {
  const std::size_t d = ds.dims();
  const std::size_t v = ds.num_covariates();
  std::vector<std::vector<double>> dim_ranks(d), var_ranks(v);
  parallel_for(d, threads, [&](std::size_t j) {
    std::vector<double> col(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) col[i] = ds.row(i)[j];
    dim_ranks[j] = average_ranks(col);
  });
  parallel_for(v, threads, [&](std::size_t j) { var_ranks[j] = average_ranks(ds.covariate_column(j)); });
  Matrix out(d, v);
  parallel_for(d, threads, [&](std::size_t a) {
    for (std::size_t b = 0; b < v; ++b) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = pearson(dim_ranks[a], var_ranks[b]);
    }
  });
  return out;
}

}  // namespace embgeo
