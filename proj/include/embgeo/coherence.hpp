#pragma once

#include "embgeo/intrinsic_dim.hpp"
#include "embgeo/local_geometry.hpp"

#include <nlohmann/json.hpp>

#include <array>

namespace embgeo {

enum class SpreadMode { zscore_std, raw_cv };

struct CoherenceOptions {
  std::size_t k = 10;
  SpreadMode mode = SpreadMode::zscore_std;
  // Empty = every non-constant covariate.
  std::vector<std::string> variables;
  int threads = 1;
};

struct CoherenceScore {
  std::size_t row = 0;
  std::vector<double> spreads;  // one per evaluated variable
  double mean = 0.0;
};

/**
 * Spread of each covariate among a row's k self-excluded embedding
 * neighbors, averaged over variables. With zscore_std the dataset's
 * covariates must already be z-scored; raw_cv divides the std by |mean| of
 * the raw values and skips variables whose neighborhood mean is zero.
 */
std::vector<CoherenceScore> retrieval_coherence(const EmbeddingDataset& ds, const KnnIndex& index,
                                                std::span<const std::size_t> rows,
                                                const CoherenceOptions& options = {});

/// Names of the variables retrieval_coherence evaluates under `options`.
std::vector<std::string> coherence_variables(const EmbeddingDataset& ds, const CoherenceOptions& options);

inline constexpr std::array<std::string_view, 5> kFeatureNames = {
    "local_id", "local_pr", "mean_neighbor_distance", "tangent_angle", "pc1_alignment"};

struct FeatureConfig {
  std::size_t id_k = 20;
  std::size_t pr_k = 100;
  std::size_t distance_k = 10;
  std::size_t tangent_dim = 10;
  Vector global_pc1;

  nlohmann::json to_json() const;
  static FeatureConfig from_json(const nlohmann::json& j);
};

struct RowGeometry {
  std::size_t row = 0;
  std::array<double, 5> features{};
  std::array<bool, 5> valid{};
  Vector pc1;
  std::optional<std::size_t> adjacent_row;

  bool complete() const { return std::all_of(valid.begin(), valid.end(), [](bool v) { return v; }); }
  Vector feature_vector() const { return Eigen::Map<const Vector>(features.data(), 5); }
};

/// Computes the five geometric features of a row; thread-safe and stateless.
class FeatureExtractor {
 public:
  FeatureExtractor(const EmbeddingDataset& ds, const KnnIndex& index, FeatureConfig config);

  const FeatureConfig& config() const { return config_; }
  RowGeometry compute(std::size_t row) const;
  std::vector<RowGeometry> compute_rows(std::span<const std::size_t> rows, int threads = 1) const;

  /// Nearest row (planar lat/lon) at a location different from the row's own; lower id on ties.
  std::optional<std::size_t> adjacent_row(std::size_t row) const;

 private:
  const EmbeddingDataset& ds_;
  const KnnIndex& index_;
  FeatureConfig config_;
};

struct ConfidenceModel {
  std::vector<std::string> features;
  Vector coefficients;
  double intercept = 0.0;
  double r2_fit = 0.0;
  double r2_holdout = 0.0;
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;
  bool rank_deficient = false;
  std::vector<double> feature_spearman;

  double predict(const Vector& features) const;
  nlohmann::json to_json() const;
  static ConfidenceModel from_json(const nlohmann::json& j);
};

/// Coefficient of determination of `pred` against `y` (0 when y is constant).
double r_squared(const Vector& y, const Vector& pred);

/**
 * Least squares of coherence on the five features plus an intercept, fitted
 * on a seeded (1 - holdout) split; minimum-norm solution when rank-deficient.
 */
ConfidenceModel fit_confidence_model(const Matrix& features, const Vector& coherence,
                                     double holdout = 0.2, std::uint64_t seed = 0);

/// Per-probe inputs to regional profiles.
struct ProbeProfile {
  std::size_t row = 0;
  double coherence = std::numeric_limits<double>::quiet_NaN();
  double local_id = std::numeric_limits<double>::quiet_NaN();
  Vector pc1;
  std::array<double, 5> features{};
  bool features_valid = false;
};

/// Indices of the three largest |loadings| (lower index on ties).
std::vector<std::size_t> top_loading_dims(const Vector& pc1, std::size_t count = 3);

struct DimensionShare {
  std::size_t dim = 0;
  double fraction = 0.0;
};

struct RegionalProfile {
  std::string name;
  RegionSpec box;
  std::size_t count = 0;
  double mean_coherence = std::numeric_limits<double>::quiet_NaN();
  double mean_local_id = std::numeric_limits<double>::quiet_NaN();
  std::vector<DimensionShare> top_dims;
  std::vector<double> mean_features;  // 5 entries, NaN when no complete feature vectors
};

std::vector<RegionalProfile> regional_profiles(const EmbeddingDataset& ds,
                                               const std::vector<ProbeProfile>& probes,
                                               const std::vector<RegionSpec>& regions);

struct DimensionImportance {
  std::size_t dim = 0;
  double global_fraction = 0.0;
  std::vector<double> region_fraction;  // aligned with the region list
};

/// Fraction of probes (overall and per region) whose PC1 has the dim among its top-3 |loadings|.
std::vector<DimensionImportance> dimension_importance(const EmbeddingDataset& ds,
                                                      const std::vector<ProbeProfile>& probes,
                                                      const std::vector<RegionSpec>& regions);

struct GeometricDictionary {
  std::vector<RegionalProfile> regions;
  ConfidenceModel confidence_model;
  std::vector<DimensionImportance> dimension_importance;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const;
  static GeometricDictionary from_json(const nlohmann::json& j);
  /// SHA-256 of the canonical JSON text.
  std::string hash() const;
  const RegionalProfile* find_region(std::string_view name) const;
  FeatureConfig feature_config() const;
};

/// Validates that every region has a profile, then assembles the bundle.
GeometricDictionary build_geometric_dictionary(std::vector<RegionalProfile> profiles,
                                               ConfidenceModel model,
                                               std::vector<DimensionImportance> importance,
                                               const std::vector<RegionSpec>& regions,
                                               nlohmann::json provenance);

GeometricDictionary load_geometric_dictionary(const std::filesystem::path& path);
void save_geometric_dictionary(const GeometricDictionary& dict, const std::filesystem::path& path);

}  // namespace embgeo
