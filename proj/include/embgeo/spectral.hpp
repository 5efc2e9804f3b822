#pragma once

#include "embgeo/dataset.hpp"

namespace embgeo {

/// Eigenvalues in descending order with matching orthonormal eigenvectors (columns).
struct EigenSummary {
  Vector eigenvalues;
  Matrix eigenvectors;
  Vector variance_fraction;
  double participation_ratio = 0.0;

  /// First `p` eigenvectors as a D x p frame.
  Matrix top(std::size_t p) const { return eigenvectors.leftCols(static_cast<Eigen::Index>(p)); }
};

/// Sample covariance with the (N-1) denominator. Rows are observations.
Matrix covariance_matrix(const Matrix& x, int threads = 1);
Matrix covariance_matrix(const EmbeddingDataset& ds, int threads = 1);

/// Average ranks (1-based) of a sequence; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of the columns of `x`; constant columns correlate 0 off the diagonal.
Matrix correlation_matrix(const Matrix& x, int threads = 1);

/// Spearman rank correlation of the columns; unit diagonal.
Matrix spearman_matrix(const Matrix& x, int threads = 1);
Matrix spearman_matrix(const EmbeddingDataset& ds, int threads = 1);

/// Spearman correlation of two equally long samples (0 if either is constant).
double spearman(std::span<const double> a, std::span<const double> b);
double pearson(std::span<const double> a, std::span<const double> b);

/**
 * Symmetric eigendecomposition. Each eigenvector's largest-magnitude
 * component is made positive (first such index on ties).
 */
EigenSummary eigendecompose(const Matrix& m);

/// (sum l)^2 / sum l^2. Tiny negative round-off (>= -1e-9 max) is treated as 0.
double participation_ratio(std::span<const double> eigenvalues);
double participation_ratio(const Vector& eigenvalues);

/// Principal angles in degrees, ascending, between two orthonormal D x p frames.
std::vector<double> subspace_principal_angles(const Matrix& u, const Matrix& w);

/// Throws DataError unless the columns of `frame` are orthonormal within `tol`.
void require_orthonormal(const Matrix& frame, double tol = 1e-6);

struct PairCensus {
  std::size_t count = 0;
  std::size_t total = 0;
};

/// Unordered off-diagonal pairs with |r| > threshold, and D(D-1)/2.
PairCensus count_correlated_pairs(const Matrix& corr, double threshold);

/// Centered projection onto the top eigenvectors of the covariance.
Matrix pca_project(const Matrix& x, std::size_t n_components);
Matrix pca_project(const EmbeddingDataset& ds, std::size_t n_components);

struct YearAngles {
  int year_a = 0;
  int year_b = 0;
  std::vector<double> angles;
};

struct YearStability {
  std::vector<int> years;
  std::vector<EigenSummary> per_year;
  std::vector<YearAngles> pairs;
};

/// Eigendecomposition per year label and principal angles between top-p subspaces.
YearStability per_year_stability(const EmbeddingDataset& ds, std::size_t top_p = 5, int threads = 1);

/// D x V Spearman correlations between embedding dimensions and covariates.
Matrix dimension_variable_correlations(const EmbeddingDataset& ds, int threads = 1);

}  // namespace embgeo
