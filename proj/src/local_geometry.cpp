#include "embgeo/local_geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace embgeo {

LocalPca local_pca_rows(const EmbeddingDataset& ds, std::span<const std::size_t> rows,
                        const LocalPcaOptions& options) {
  if (rows.size() < 2) throw DataError("local PCA needs at least 2 points");
  if (options.tangent_dim < 1) throw ConfigError("tangent_dim must be >= 1");
  LocalPca out;
  out.neighbors.assign(rows.begin(), rows.end());
  const Matrix x = ds.embedding_matrix(rows);
  const auto eig = eigendecompose(covariance_matrix(x));
  out.eigenvalues = eig.eigenvalues;
  out.eigenvectors = eig.eigenvectors;
  out.center = x.colwise().mean().transpose();
  const double top = eig.eigenvalues[0];
  if (!(top > 0.0)) {
    out.degenerate = true;
    out.basis = Matrix(static_cast<Eigen::Index>(ds.dims()), 0);
    return out;
  }
  std::size_t m = 0;
  const std::size_t cap = std::min<std::size_t>(options.tangent_dim, ds.dims());
  while (m < cap && eig.eigenvalues[static_cast<Eigen::Index>(m)] > options.rank_tol * top) ++m;
  out.basis = eig.top(m);
  out.local_pr = eig.participation_ratio;
  out.var_frac_pc1 = eig.variance_fraction[0];
  return out;
}

LocalPca local_pca(const EmbeddingDataset& ds, const KnnIndex& index, std::size_t probe,
                   std::size_t k, const LocalPcaOptions& options) {
  if (k < 1 || k + 1 > ds.size()) throw ConfigError("local PCA k must lie in [1, N-1]");
  const auto nn = index.search_row(probe, k, true);
  std::vector<std::size_t> rows;
  rows.reserve(k + 1);
  if (options.include_probe) rows.push_back(probe);
  rows.insert(rows.end(), nn.indices.begin(), nn.indices.end());
  auto out = local_pca_rows(ds, rows, options);
  out.probe = probe;
  out.k = k;
  return out;
}

double alignment(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DataError("alignment: dimension mismatch");
  return std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
}

double tangent_angle(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DataError("tangent_angle: frames have different widths (" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.cols()) + ")");
  }
  if (a.cols() == 0) throw DataError("tangent_angle: empty frame");
  return subspace_principal_angles(a, b).back();
}

Category dominant_category(const Vector& pc1, const DimensionDictionary& dict) {
  if (static_cast<std::size_t>(pc1.size()) != dict.dims()) {
    throw DataError("dimension dictionary does not cover the embedding dimension");
  }
  std::map<Category, double> mass;
  for (std::size_t d = 0; d < dict.dims(); ++d) {
    const double w = pc1[static_cast<Eigen::Index>(d)];
    mass[dict.entry(d).category] += w * w;
  }
  Category best = Category::other;
  double best_mass = -1.0;
  for (Category c : all_categories()) {
    auto it = mass.find(c);
    if (it != mass.end() && it->second > best_mass) {
      best = c;
      best_mass = it->second;
    }
  }
  return best;
}

double random_alignment_baseline(std::size_t D, std::size_t draws, std::uint64_t seed) {
  if (D < 1 || draws < 1) throw ConfigError("baseline needs D >= 1 and draws >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a(static_cast<Eigen::Index>(D)), b(static_cast<Eigen::Index>(D));
  double total = 0.0;
  for (std::size_t t = 0; t < draws; ++t) {
    for (auto& v : a) v = normal(rng);
    for (auto& v : b) v = normal(rng);
    total += std::abs(a.normalized().dot(b.normalized()));
  }
  return total / static_cast<double>(draws);
}

double analytic_alignment_baseline(std::size_t D) {
  return std::sqrt(2.0 / (std::numbers::pi * static_cast<double>(D)));
}

std::vector<std::optional<std::size_t>> adjacent_probes(const EmbeddingDataset& ds,
                                                        std::span<const std::size_t> probes) {
  std::vector<std::optional<std::size_t>> out(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < probes.size(); ++j) {
      if (j == i || probes[j] == probes[i]) continue;
      const double dlat = ds.lat(probes[i]) - ds.lat(probes[j]);
      const double dlon = ds.lon(probes[i]) - ds.lon(probes[j]);
      const double d2 = dlat * dlat + dlon * dlon;
      if (d2 < best || (d2 == best && out[i] && probes[j] < *out[i])) {
        best = d2;
        out[i] = probes[j];
      }
    }
  }
  return out;
}

SurveyResult probe_survey(const EmbeddingDataset& ds, const KnnIndex& index,
                          std::span<const std::size_t> probes, std::size_t k,
                          const EigenSummary& global, const DimensionDictionary& dict,
                          const SurveyOptions& options) {
  if (dict.dims() != ds.dims()) throw DataError("dimension dictionary does not match D");
  for (std::size_t p : probes) {
    if (p >= ds.size()) throw DataError("probe id " + std::to_string(p) + " out of range");
  }
  const auto adjacency = adjacent_probes(ds, probes);
  std::vector<LocalPca> pcas(probes.size());
  parallel_for(probes.size(), options.threads,
               [&](std::size_t i) { pcas[i] = local_pca(ds, index, probes[i], k, options.pca); });
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < probes.size(); ++i) slot.emplace(probes[i], i);

  const Vector g1 = global.eigenvectors.col(0);
  const Vector g2 = global.eigenvectors.cols() > 1 ? Vector(global.eigenvectors.col(1)) : Vector();
  SurveyResult result;
  result.records.resize(probes.size());
  parallel_for(probes.size(), options.threads, [&](std::size_t i) {
    const auto& pca = pcas[i];
    auto& rec = result.records[i];
    rec.probe = probes[i];
    rec.k = k;
    rec.lat = ds.lat(probes[i]);
    rec.lon = ds.lon(probes[i]);
    rec.degenerate = pca.degenerate;
    rec.adjacent_probe = adjacency[i];
    if (pca.degenerate) return;
    rec.local_pr = pca.local_pr;
    rec.var_frac_pc1 = pca.var_frac_pc1;
    rec.align_pc1 = alignment(pca.pc(0), g1);
    rec.align_pc2 = pca.basis.cols() > 1 && g2.size() > 0 ? alignment(pca.pc(1), g2) : 0.0;
    rec.category = dominant_category(pca.pc(0), dict);
    if (adjacency[i]) {
      const auto& other = pcas[slot.at(*adjacency[i])];
      if (!other.degenerate) {
        const auto m = std::min(pca.basis.cols(), other.basis.cols());
        rec.tangent_dim = static_cast<std::size_t>(m);
        rec.tangent_angles = subspace_principal_angles(pca.basis.leftCols(m), other.basis.leftCols(m));
        rec.tangent_deg = rec.tangent_angles.back();
      }
    }
  });

  auto& s = result.summary;
  s.k = k;
  s.probes = probes.size();
  std::size_t valid = 0, with_angle = 0, over60 = 0;
  for (const auto& rec : result.records) {
    if (rec.degenerate) {
      ++s.degenerate;
      continue;
    }
    ++valid;
    s.mean_alignment += rec.align_pc1;
    s.mean_alignment_pc2 += rec.align_pc2;
    s.mean_local_pr += rec.local_pr;
    s.mean_var_frac_pc1 += rec.var_frac_pc1;
    ++s.category_counts[rec.category];
    if (!std::isnan(rec.tangent_deg)) {
      ++with_angle;
      s.mean_tangent_deg += rec.tangent_deg;
      if (rec.tangent_deg > 60.0) ++over60;
    }
  }
  if (valid > 0) {
    const double v = static_cast<double>(valid);
    s.mean_alignment /= v;
    s.mean_alignment_pc2 /= v;
    s.mean_local_pr /= v;
    s.mean_var_frac_pc1 /= v;
  }
  if (with_angle > 0) {
    s.mean_tangent_deg /= static_cast<double>(with_angle);
    s.frac_tangent_gt60 = static_cast<double>(over60) / static_cast<double>(with_angle);
  } else {
    s.mean_tangent_deg = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

std::vector<std::size_t> select_probes(const EmbeddingDataset& ds, std::size_t count,
                                       std::uint64_t seed, const SubsampleOptions& options) {
  if (count == 0) throw ConfigError("probe count must be >= 1");
  if (!ds.covariate_index(options.elevation_variable)) return sample_rows(ds.size(), count, seed);
  const std::size_t col = *ds.covariate_index(options.elevation_variable);
  std::size_t groups = 0;
  std::vector<bool> used(options.band_edges.size(), false);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (auto b = band_of(ds.covariate(i, col), options.band_edges); b && !used[*b]) {
      used[*b] = true;
      ++groups;
    }
  }
  if (groups == 0) return sample_rows(ds.size(), count, seed);
  const std::size_t per_group = (count + groups - 1) / groups;
  auto rows = stratified_sample_rows(ds, per_group, GroupKey::elevation_band, seed, options);
  if (rows.size() > count) {
    std::vector<std::size_t> keep;
    for (std::size_t pos : sample_rows(rows.size(), count, seed + 1)) keep.push_back(rows[pos]);
    rows = std::move(keep);
  }
  return rows;
}

MultiscaleResult multiscale_sweep(const EmbeddingDataset& ds, const KnnIndex& index,
                                  std::span<const std::size_t> probes,
                                  const std::vector<std::size_t>& k_list,
                                  const EigenSummary& global, const DimensionDictionary& dict,
                                  const SurveyOptions& options, std::vector<SurveyResult>* surveys) {
  MultiscaleResult out;
  for (std::size_t k : k_list) {
    if (k < 1 || k + 1 > ds.size()) {
      out.skipped_k.push_back(k);
      continue;
    }
    auto survey = probe_survey(ds, index, probes, k, global, dict, options);
    out.summaries.push_back(survey.summary);
    if (surveys) surveys->push_back(std::move(survey));
  }
  return out;
}

}  // namespace embgeo
