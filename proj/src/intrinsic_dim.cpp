#include "embgeo/intrinsic_dim.hpp"

#include <cmath>
#include <limits>

namespace embgeo {

std::optional<double> mle_id_point(std::span<const double> distances) {
  if (distances.size() < 2) throw DataError("MLE intrinsic dimension needs k >= 2");
  std::vector<double> r;
  r.reserve(distances.size());
  for (std::size_t j = 0; j < distances.size(); ++j) {
    const double v = distances[j];
    if (!std::isfinite(v) || v < 0.0) throw DataError("neighbor distances must be finite and >= 0");
    if (j > 0 && v < distances[j - 1]) throw DataError("neighbor distances must be ascending");
    if (v > 0.0) r.push_back(v);
  }
  if (r.size() < 2) return std::nullopt;
  const std::size_t k = r.size();
  const double rk = r.back();
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < k; ++j) sum += std::log(rk / r[j]);
  if (!(sum > 0.0)) return std::nullopt;
  return static_cast<double>(k - 1) / sum;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) {
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  double s = 0.0;
  for (double v : values) s += v;
  const double mean = s / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::vector<IdField> mle_id_field(const KnnIndex& index, std::span<const std::size_t> probes,
                                  const std::vector<std::size_t>& k_list, int threads) {
  if (k_list.empty()) throw ConfigError("k_list is empty");
  std::size_t k_max = 0;
  for (std::size_t k : k_list) {
    if (k < 2 || k + 1 > index.size()) {
      throw ConfigError("k=" + std::to_string(k) + " outside [2, N-1]");
    }
    k_max = std::max(k_max, k);
  }
  for (std::size_t p : probes) {
    if (p >= index.size()) throw DataError("probe id " + std::to_string(p) + " out of range");
  }
  const auto neighbors = index.search_rows(probes, k_max, true, threads);
  std::vector<IdField> out;
  for (std::size_t k : k_list) {
    IdField field;
    field.k = k;
    field.probes.assign(probes.begin(), probes.end());
    field.estimates.assign(probes.size(), std::numeric_limits<double>::quiet_NaN());
    field.valid.assign(probes.size(), false);
    std::vector<double> good;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const std::span<const double> r(neighbors[i].distances.data(), k);
      for (double v : r) field.summary.duplicates += v == 0.0 ? 1 : 0;
      if (auto d = mle_id_point(r)) {
        field.estimates[i] = *d;
        field.valid[i] = true;
        good.push_back(*d);
      } else {
        ++field.summary.flagged;
      }
    }
    field.summary.k = k;
    field.summary.count = good.size();
    std::tie(field.summary.mean, field.summary.stddev) = mean_std(good);
    out.push_back(std::move(field));
  }
  return out;
}

std::vector<BandStats> stratify_by_band(const IdField& field, std::span<const double> band_values,
                                        std::span<const double> edges) {
  if (band_values.size() != field.estimates.size()) {
    throw DataError("one band value per probe is required");
  }
  if (edges.size() < 2) throw ConfigError("band edges need at least two values");
  for (std::size_t b = 1; b < edges.size(); ++b) {
    if (!(edges[b] > edges[b - 1])) throw ConfigError("band edges must be strictly increasing");
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<std::vector<double>> members(nb);
  for (std::size_t i = 0; i < band_values.size(); ++i) {
    if (!field.valid[i]) continue;
    for (std::size_t b = 0; b < nb; ++b) {
      if (band_values[i] >= edges[b] && band_values[i] < edges[b + 1]) {
        members[b].push_back(field.estimates[i]);
        break;
      }
    }
  }
  std::vector<BandStats> out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    out[b].lower = edges[b];
    out[b].upper = edges[b + 1];
    out[b].count = members[b].size();
    std::tie(out[b].mean, out[b].stddev) = mean_std(members[b]);
  }
  return out;
}

}  // namespace embgeo
