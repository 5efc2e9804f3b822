#pragma once

#include "embgeo/local_geometry.hpp"

namespace embgeo {

enum class ProbeScale { global, regional, local };
std::string_view probe_scale_name(ProbeScale s);

struct ProbeModel {
  std::string property;
  ProbeScale scale = ProbeScale::global;
  std::string scope;  // region name or source row id; empty for global
  Vector direction;   // unit norm, or zero when flagged
  Vector coefficients;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t count = 0;
  bool zero_direction = false;
};

/**
 * Ridge regression with an unpenalized intercept: X and y are centered, then
 * (Xc^T Xc + alpha I) beta = Xc^T yc. R^2 is measured on the training rows.
 */
ProbeModel fit_ridge_probe(const Matrix& x, const Vector& y, double alpha = 1.0);

struct PcSelection {
  std::size_t pc_index = 0;
  Vector direction;      // oriented so its scores correlate positively with the covariate
  double correlation = 0.0;  // Pearson r of the unoriented PC scores
};

/**
 * Pearson correlation between the neighborhood's scores on each of the first
 * `top_p` basis columns and the covariate; the largest |r| wins, lower index
 * on ties. Throws DataError if the covariate is constant.
 */
PcSelection select_pc_direction(const Matrix& neighborhood, const Matrix& basis,
                                std::span<const double> covariate, std::size_t top_p = 10);

struct CosineStats {
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
};

CosineStats summarize_cosines(std::vector<double> values);

struct DirectionStability {
  std::string property;
  std::size_t excluded_zero = 0;
  std::vector<double> local_vs_global;
  std::vector<double> regional_vs_global;
  std::vector<double> local_vs_regional;
  CosineStats local_global;
  CosineStats regional_global;
  CosineStats local_regional;
  CosineStats local_pairwise;
};

/// |cos| statistics between scales for one property. Local models are paired
/// with the regional model whose scope matches `local_region[i]` when given.
DirectionStability direction_stability(const std::vector<ProbeModel>& models,
                                       const std::vector<std::string>& local_region = {});

struct ProbeSuiteOptions {
  double alpha = 1.0;
  std::size_t k = 100;
  std::size_t global_sample = 50000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ProbeSuite {
  std::vector<ProbeModel> models;
  std::vector<DirectionStability> stability;
};

/// Global, per-region and per-source local probes for every property.
ProbeSuite fit_probe_suite(const EmbeddingDataset& ds, const KnnIndex& index,
                           const std::vector<std::string>& properties,
                           const std::vector<RegionSpec>& regions,
                           std::span<const std::size_t> sources, const ProbeSuiteOptions& options);

/// Source row plus its k self-excluded neighbors.
std::vector<std::size_t> neighborhood_rows(const KnnIndex& index, std::size_t source, std::size_t k);

}  // namespace embgeo
