#pragma once

#include "embgeo/common.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace embgeo {

/// Per-covariate global moments (population standard deviation).
struct CovariateStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;
};

/**
 * N embedding vectors with coordinates, year labels and V co-located
 * covariates.
 *
 * Vectors are stored row-major as 32-bit floats, matching the binary
 * interchange format; covariates are kept in double precision. The object is
 * immutable once constructed and validated, so it may be shared read-only
 * across threads.
 */
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;

  /// Validates every invariant and computes covariate statistics.
  EmbeddingDataset(std::size_t dims, std::vector<float> vectors, std::vector<double> lat,
                   std::vector<double> lon, std::vector<int> years,
                   std::vector<double> covariates, std::vector<std::string> covariate_names);

  std::size_t size() const { return n_; }
  std::size_t dims() const { return d_; }
  std::size_t num_covariates() const { return names_.size(); }

  std::span<const float> row(std::size_t i) const { return {vectors_.data() + i * d_, d_}; }
  std::span<const float> vectors() const { return vectors_; }
  Vector row_vector(std::size_t i) const;

  double lat(std::size_t i) const { return lat_[i]; }
  double lon(std::size_t i) const { return lon_[i]; }
  int year(std::size_t i) const { return years_[i]; }
  std::span<const double> lats() const { return lat_; }
  std::span<const double> lons() const { return lon_; }
  std::span<const int> years() const { return years_; }

  double covariate(std::size_t i, std::size_t j) const { return covariates_[i * names_.size() + j]; }
  std::span<const double> covariates() const { return covariates_; }
  std::span<const double> covariate_row(std::size_t i) const {
    return {covariates_.data() + i * names_.size(), names_.size()};
  }
  std::vector<double> covariate_column(std::size_t j) const;
  const std::vector<std::string>& covariate_names() const { return names_; }
  std::optional<std::size_t> covariate_index(std::string_view name) const;
  /// Like covariate_index but throws DataError naming the missing variable.
  std::size_t require_covariate(std::string_view name) const;

  const CovariateStats& stats() const { return stats_; }

  /// Sorted distinct year labels.
  std::vector<int> distinct_years() const;

  /// Rows in the given order, preserving all per-row fields.
  EmbeddingDataset subset(std::span<const std::size_t> rows) const;

  /// Copy with extra covariate columns appended (column-major `values`, N per column).
  EmbeddingDataset with_covariates(const std::vector<std::string>& names,
                                   const std::vector<std::vector<double>>& columns) const;

  /// Copy with covariates replaced wholesale (row-major N×V).
  EmbeddingDataset with_covariate_matrix(std::vector<double> covariates,
                                         std::vector<std::string> names) const;

  /// Copy with every embedding vector multiplied by `factor` or replaced.
  EmbeddingDataset with_vectors(std::vector<float> vectors) const;

  /// SHA-256 over a canonical byte serialization of every field.
  std::string content_hash() const;

  /// Embedding matrix as doubles (N×D), optionally restricted to rows.
  Matrix embedding_matrix() const;
  Matrix embedding_matrix(std::span<const std::size_t> rows) const;

 private:
  void validate() const;
  void compute_stats();

  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> vectors_;
  std::vector<double> lat_;
  std::vector<double> lon_;
  std::vector<int> years_;
  std::vector<double> covariates_;
  std::vector<std::string> names_;
  CovariateStats stats_;
};

enum class DatasetFormat { binary, csv };

/// Guess the format from a path: directories are binary, anything else CSV.
DatasetFormat infer_format(const std::filesystem::path& path);

/**
 * Load a dataset.
 *
 * Binary: a directory holding meta.json, vectors.f32le, covariates.f32le and
 * coords.f32le. CSV: header `lat,lon,year,e0..e{D-1},<covariates>`.
 * Errors name the offending row and column.
 */
EmbeddingDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Write the canonical binary format into `dir` (created if needed).
void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& dir);

/// Write the CSV format.
void save_dataset_csv(const EmbeddingDataset& ds, const std::filesystem::path& path);

/**
 * Standardize every covariate to mean 0, std 1 (population moments).
 * Constant covariates become all zeros and stay flagged in stats().constant.
 */
EmbeddingDataset zscore_covariates(const EmbeddingDataset& ds);

enum class GroupKey { year, elevation_band };

struct SubsampleOptions {
  std::string elevation_variable = "elevation";
  std::vector<double> band_edges = {0.0, 500.0, 1000.0, 2000.0,
                                    std::numeric_limits<double>::infinity()};
};

/// Index of the band [edges[b], edges[b+1]) holding `value`, if any.
std::optional<std::size_t> band_of(double value, std::span<const double> edges);

/**
 * Draw min(per_group, |group|) rows from every group, deterministically for a
 * fixed seed. Returned row indices are ascending. Rows whose elevation falls
 * outside every band are never selected.
 */
std::vector<std::size_t> stratified_sample_rows(const EmbeddingDataset& ds, std::size_t per_group,
                                                GroupKey key, std::uint64_t seed,
                                                const SubsampleOptions& options = {});

EmbeddingDataset stratified_subsample(const EmbeddingDataset& ds, std::size_t per_group,
                                      GroupKey key, std::uint64_t seed,
                                      const SubsampleOptions& options = {});

/// Uniform sample of `count` distinct rows (all rows when count >= N), ascending.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dimension dictionary

enum class Category { climate, hydrology, other, soil, temperature, terrain, urban, vegetation };

/// All categories, in name order.
const std::vector<Category>& all_categories();
std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);

struct DimensionEntry {
  std::size_t dim = 0;
  Category category = Category::other;
  std::vector<std::string> variables;
  double strength = 0.0;
};

/// Maps every embedding dimension to an environmental category.
class DimensionDictionary {
 public:
  DimensionDictionary() = default;
  /// Entries may come in any order; every dim in [0, dims) must appear once.
  DimensionDictionary(std::vector<DimensionEntry> entries, std::size_t dims);

  std::size_t dims() const { return entries_.size(); }
  const DimensionEntry& entry(std::size_t dim) const { return entries_.at(dim); }
  const std::vector<DimensionEntry>& entries() const { return entries_; }

  /// Same category for every dimension.
  static DimensionDictionary uniform(std::size_t dims, Category c);

 private:
  std::vector<DimensionEntry> entries_;
};

DimensionDictionary load_dimension_dictionary(const std::filesystem::path& path, std::size_t dims);
DimensionDictionary parse_dimension_dictionary(std::string_view json_text, std::size_t dims);

// ---------------------------------------------------------------------------
// Regions

struct RegionSpec {
  std::string name;
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool contains(double lat, double lon) const {
    return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
  }
};

std::vector<RegionSpec> load_regions(const std::filesystem::path& path);
std::vector<RegionSpec> parse_regions(std::string_view json_text);
/// Throws DataError on inverted boxes or duplicate names.
void validate_regions(const std::vector<RegionSpec>& regions);

/// First region (in list order) containing the point.
std::optional<std::size_t> assign_region(const std::vector<RegionSpec>& regions, double lat,
                                         double lon);

}  // namespace embgeo
