#pragma once

#include "embgeo/knn.hpp"
#include "embgeo/spectral.hpp"

#include <map>

namespace embgeo {

struct LocalPcaOptions {
  std::size_t tangent_dim = 10;
  bool include_probe = true;
  // Components with eigenvalue <= rank_tol * lambda_1 are dropped from the
  // tangent frame, so noiseless low-dimensional neighborhoods keep only
  // their true span.
  double rank_tol = 1e-9;
};

struct LocalPca {
  std::size_t probe = 0;
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;
  Vector eigenvalues;  // descending, full spectrum
  Matrix basis;        // D x m, m <= tangent_dim
  Matrix eigenvectors; // D x D, full
  Vector center;       // neighborhood mean
  double local_pr = 0.0;
  double var_frac_pc1 = 0.0;
  bool degenerate = false;

  Vector pc(std::size_t i) const { return basis.col(static_cast<Eigen::Index>(i)); }
};

/// Local PCA of the probe's k self-excluded neighbors (plus the probe when included).
LocalPca local_pca(const EmbeddingDataset& ds, const KnnIndex& index, std::size_t probe,
                   std::size_t k, const LocalPcaOptions& options = {});

/// Local PCA of an explicit neighbor set.
LocalPca local_pca_rows(const EmbeddingDataset& ds, std::span<const std::size_t> rows,
                        const LocalPcaOptions& options = {});

/// |<a, b>| for unit vectors, clamped to [0, 1].
double alignment(const Vector& a, const Vector& b);

/// Largest principal angle (degrees) between two frames of equal width.
double tangent_angle(const Matrix& a, const Matrix& b);

/// Category with the largest summed squared loading; ties go to category name order.
Category dominant_category(const Vector& pc1, const DimensionDictionary& dict);

/// Monte Carlo mean |cos| between independent random unit vectors in R^D.
double random_alignment_baseline(std::size_t D, std::size_t draws, std::uint64_t seed);
/// sqrt(2 / (pi D)), the large-D approximation of the same expectation.
double analytic_alignment_baseline(std::size_t D);

struct LocalGeometryRecord {
  std::size_t probe = 0;
  std::size_t k = 0;
  double lat = 0.0;
  double lon = 0.0;
  double local_pr = 0.0;
  double align_pc1 = 0.0;
  double align_pc2 = 0.0;
  std::optional<std::size_t> adjacent_probe;
  double tangent_deg = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> tangent_angles;
  std::size_t tangent_dim = 0;
  Category category = Category::other;
  double var_frac_pc1 = 0.0;
  bool degenerate = false;
};

struct SurveySummary {
  std::size_t k = 0;
  std::size_t probes = 0;
  std::size_t degenerate = 0;
  double mean_alignment = 0.0;      // local PC1 vs global PC1
  double mean_alignment_pc2 = 0.0;  // local PC2 vs global PC2
  double mean_local_pr = 0.0;
  double mean_tangent_deg = 0.0;
  double frac_tangent_gt60 = 0.0;
  double mean_var_frac_pc1 = 0.0;
  std::map<Category, std::size_t> category_counts;
};

struct SurveyResult {
  std::vector<LocalGeometryRecord> records;
  SurveySummary summary;
};

struct SurveyOptions {
  LocalPcaOptions pca;
  int threads = 1;
};

/// For each probe, the nearest other probe in planar (lat, lon) distance; lower id on ties.
std::vector<std::optional<std::size_t>> adjacent_probes(const EmbeddingDataset& ds,
                                                        std::span<const std::size_t> probes);

SurveyResult probe_survey(const EmbeddingDataset& ds, const KnnIndex& index,
                          std::span<const std::size_t> probes, std::size_t k,
                          const EigenSummary& global, const DimensionDictionary& dict,
                          const SurveyOptions& options = {});

/**
 * Probe rows stratified by elevation band when the elevation covariate
 * exists, otherwise uniform. Deterministic per seed; ascending row ids.
 */
std::vector<std::size_t> select_probes(const EmbeddingDataset& ds, std::size_t count,
                                       std::uint64_t seed, const SubsampleOptions& options = {});

struct MultiscaleResult {
  std::vector<SurveySummary> summaries;
  std::vector<std::size_t> skipped_k;
};

MultiscaleResult multiscale_sweep(const EmbeddingDataset& ds, const KnnIndex& index,
                                  std::span<const std::size_t> probes,
                                  const std::vector<std::size_t>& k_list,
                                  const EigenSummary& global, const DimensionDictionary& dict,
                                  const SurveyOptions& options = {},
                                  std::vector<SurveyResult>* surveys = nullptr);

}  // namespace embgeo
