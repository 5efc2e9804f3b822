#pragma once

#include "embgeo/knn.hpp"

#include <optional>

namespace embgeo {

/**
 * Levina-Bickel estimate from ascending neighbor distances r_1..r_k:
 *   d = [ (1/(k-1)) * sum_{j=1}^{k-1} log(r_k / r_j) ]^-1
 * Zero distances (duplicates) are dropped first, shrinking k. Returns nullopt
 * if fewer than 2 positive distances remain or the log-sum is zero.
 */
std::optional<double> mle_id_point(std::span<const double> distances);

struct IdSummary {
  std::size_t k = 0;
  std::size_t count = 0;    // probes with a valid estimate
  std::size_t flagged = 0;  // probes excluded by the duplicate policy
  std::size_t duplicates = 0;  // zero-distance neighbors dropped across all probes
  double mean = 0.0;
  double stddev = 0.0;
};

struct IdField {
  std::size_t k = 0;
  std::vector<std::size_t> probes;
  std::vector<double> estimates;  // NaN where flagged
  std::vector<bool> valid;
  IdSummary summary;
};

/// Per-probe estimates for every k, using self-excluded neighbors at max(k).
std::vector<IdField> mle_id_field(const KnnIndex& index, std::span<const std::size_t> probes,
                                  const std::vector<std::size_t>& k_list, int threads = 1);

struct BandStats {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
};

/// Aggregate valid estimates into [edges[b], edges[b+1]) bands.
std::vector<BandStats> stratify_by_band(const IdField& field, std::span<const double> band_values,
                                        std::span<const double> edges);

/// Population mean and standard deviation (NaN pair when empty).
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace embgeo
