#include "embgeo/coherence.hpp"

#include "embgeo/io.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace embgeo {

using nlohmann::json;

std::vector<std::string> coherence_variables(const EmbeddingDataset& ds, const CoherenceOptions& options) {
  std::vector<std::string> out;
  if (options.variables.empty()) {
    for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
      if (!ds.stats().constant[j]) out.push_back(ds.covariate_names()[j]);
    }
  } else {
    for (const auto& name : options.variables) {
      if (!ds.stats().constant[ds.require_covariate(name)]) out.push_back(name);
    }
  }
  return out;
}

std::vector<CoherenceScore> retrieval_coherence(const EmbeddingDataset& ds, const KnnIndex& index,
                                                std::span<const std::size_t> rows,
                                                const CoherenceOptions& options) {
  if (options.k < 1 || options.k + 1 > ds.size()) throw ConfigError("coherence k must lie in [1, N-1]");
  std::vector<std::size_t> cols;
  for (const auto& name : coherence_variables(ds, options)) cols.push_back(ds.require_covariate(name));
  std::vector<CoherenceScore> out(rows.size());
  parallel_for(rows.size(), options.threads, [&](std::size_t i) {
    const auto nn = index.search_row(rows[i], options.k, true);
    auto& score = out[i];
    score.row = rows[i];
    score.spreads.assign(cols.size(), std::numeric_limits<double>::quiet_NaN());
    double total = 0.0;
    std::size_t used = 0;
    std::vector<double> values(nn.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
      for (std::size_t t = 0; t < nn.size(); ++t) values[t] = ds.covariate(nn.indices[t], cols[c]);
      auto [mean, sd] = mean_std(values);
      double spread = sd;
      if (options.mode == SpreadMode::raw_cv) {
        if (mean == 0.0) continue;
        spread = sd / std::abs(mean);
      }
      score.spreads[c] = spread;
      total += spread;
      ++used;
    }
    score.mean = used > 0 ? total / static_cast<double>(used) : 0.0;
  });
  return out;
}

json FeatureConfig::to_json() const {
  return {{"id_k", id_k},
          {"pr_k", pr_k},
          {"distance_k", distance_k},
          {"tangent_dim", tangent_dim},
          {"global_pc1", std::vector<double>(global_pc1.data(), global_pc1.data() + global_pc1.size())}};
}

FeatureConfig FeatureConfig::from_json(const json& j) {
  FeatureConfig c;
  c.id_k = j.at("id_k").get<std::size_t>();
  c.pr_k = j.at("pr_k").get<std::size_t>();
  c.distance_k = j.at("distance_k").get<std::size_t>();
  c.tangent_dim = j.at("tangent_dim").get<std::size_t>();
  const auto pc1 = j.at("global_pc1").get<std::vector<double>>();
  c.global_pc1 = Eigen::Map<const Vector>(pc1.data(), static_cast<Eigen::Index>(pc1.size()));
  return c;
}

FeatureExtractor::FeatureExtractor(const EmbeddingDataset& ds, const KnnIndex& index, FeatureConfig config)
    : ds_(ds), index_(index), config_(std::move(config)) {
  const std::size_t k_max = std::max({config_.id_k, config_.pr_k, config_.distance_k});
  if (config_.id_k < 2) throw ConfigError("feature id_k must be >= 2");
  if (config_.pr_k < 2 || config_.distance_k < 1) throw ConfigError("feature k values too small");
  if (k_max + 1 > ds_.size()) throw ConfigError("feature k exceeds N-1");
  if (static_cast<std::size_t>(config_.global_pc1.size()) != ds_.dims()) {
    throw ConfigError("global_pc1 length does not match D");
  }
}

std::optional<std::size_t> FeatureExtractor::adjacent_row(std::size_t row) const {
  const double lat = ds_.lat(row), lon = ds_.lon(row);
  std::optional<std::size_t> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds_.size(); ++i) {
    const double dlat = ds_.lat(i) - lat, dlon = ds_.lon(i) - lon;
    const double d2 = dlat * dlat + dlon * dlon;
    if (d2 > 0.0 && d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

RowGeometry FeatureExtractor::compute(std::size_t row) const {
  if (row >= ds_.size()) throw DataError("row " + std::to_string(row) + " out of range");
  RowGeometry g;
  g.row = row;
  g.features.fill(std::numeric_limits<double>::quiet_NaN());
  const std::size_t k_max = std::max({config_.id_k, config_.pr_k, config_.distance_k});
  const auto nn = index_.search_row(row, k_max, true);

  if (auto d = mle_id_point(std::span<const double>(nn.distances.data(), config_.id_k))) {
    g.features[0] = *d;
    g.valid[0] = true;
  }

  LocalPcaOptions pca_options;
  pca_options.tangent_dim = config_.tangent_dim;
  auto local_at = [&](std::size_t r, const std::vector<std::size_t>& neighbors) {
    std::vector<std::size_t> rows{r};
    rows.insert(rows.end(), neighbors.begin(), neighbors.begin() + static_cast<std::ptrdiff_t>(config_.pr_k));
    return local_pca_rows(ds_, rows, pca_options);
  };
  const auto pca = local_at(row, nn.indices);
  if (!pca.degenerate) {
    g.features[1] = pca.local_pr;
    g.valid[1] = true;
    g.pc1 = pca.pc(0);
    g.features[4] = alignment(g.pc1, config_.global_pc1);
    g.valid[4] = true;
  }

  double dist = 0.0;
  for (std::size_t t = 0; t < config_.distance_k; ++t) dist += nn.distances[t];
  g.features[2] = dist / static_cast<double>(config_.distance_k);
  g.valid[2] = true;

  g.adjacent_row = adjacent_row(row);
  if (g.adjacent_row && !pca.degenerate) {
    const auto other_nn = index_.search_row(*g.adjacent_row, config_.pr_k, true);
    const auto other = local_at(*g.adjacent_row, other_nn.indices);
    if (!other.degenerate) {
      const auto m = std::min(pca.basis.cols(), other.basis.cols());
      g.features[3] = tangent_angle(pca.basis.leftCols(m), other.basis.leftCols(m));
      g.valid[3] = true;
    }
  }
  return g;
}

std::vector<RowGeometry> FeatureExtractor::compute_rows(std::span<const std::size_t> rows, int threads) const {
  std::vector<RowGeometry> out(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) { out[i] = compute(rows[i]); });
  return out;
}

double ConfidenceModel::predict(const Vector& f) const {
  if (f.size() != coefficients.size()) throw DataError("confidence model expects 5 features");
  return intercept + coefficients.dot(f);
}

json ConfidenceModel::to_json() const {
  return {{"features", features},
          {"coefficients", std::vector<double>(coefficients.data(), coefficients.data() + coefficients.size())},
          {"intercept", intercept},
          {"r2_fit", r2_fit},
          {"r2_holdout", r2_holdout},
          {"n_train", n_train},
          {"n_holdout", n_holdout},
          {"rank_deficient", rank_deficient},
          {"feature_spearman", feature_spearman}};
}

ConfidenceModel ConfidenceModel::from_json(const json& j) {
  ConfidenceModel m;
  m.features = j.at("features").get<std::vector<std::string>>();
  const auto c = j.at("coefficients").get<std::vector<double>>();
  m.coefficients = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  m.intercept = j.at("intercept").get<double>();
  m.r2_fit = j.at("r2_fit").get<double>();
  m.r2_holdout = j.at("r2_holdout").get<double>();
  m.n_train = j.value("n_train", std::size_t{0});
  m.n_holdout = j.value("n_holdout", std::size_t{0});
  m.rank_deficient = j.value("rank_deficient", false);
  m.feature_spearman = j.value("feature_spearman", std::vector<double>{});
  if (m.features.size() != 5 || m.coefficients.size() != 5) {
    throw DataError("confidence model must have exactly five features");
  }
  return m;
}

double r_squared(const Vector& y, const Vector& pred) {
  if (y.size() == 0) return 0.0;
  const double sst = (y.array() - y.mean()).square().sum();
  if (!(sst > 0.0)) return 0.0;
  return 1.0 - (y - pred).squaredNorm() / sst;
}

ConfidenceModel fit_confidence_model(const Matrix& features, const Vector& coherence, double holdout,
                                     std::uint64_t seed) {
  if (features.cols() != 5) throw DataError("confidence model needs exactly five feature columns");
  if (features.rows() != coherence.size()) throw DataError("features/coherence row mismatch");
  if (features.rows() < 10) throw DataError("confidence model needs at least 10 rows");
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(features.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const std::size_t n_hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(holdout * static_cast<double>(n))), 1, n - 2);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());

  auto design = [&](const std::vector<std::size_t>& rows) {
    Matrix a(static_cast<Eigen::Index>(rows.size()), 6);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      a(static_cast<Eigen::Index>(i), 0) = 1.0;
      a.row(static_cast<Eigen::Index>(i)).tail(5) = features.row(static_cast<Eigen::Index>(rows[i]));
    }
    return a;
  };
  auto target = [&](const std::vector<std::size_t>& rows) {
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = coherence[static_cast<Eigen::Index>(rows[i])];
    return y;
  };
  const Matrix a_train = design(train);
  const Vector y_train = target(train);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a_train);
  const Vector beta = cod.solve(y_train);

  ConfidenceModel m;
  for (auto name : kFeatureNames) m.features.emplace_back(name);
  m.intercept = beta[0];
  m.coefficients = beta.tail(5);
  m.rank_deficient = cod.rank() < 6;
  m.n_train = train.size();
  m.n_holdout = test.size();
  m.r2_fit = r_squared(y_train, a_train * beta);
  const Matrix a_test = design(test);
  m.r2_holdout = r_squared(target(test), a_test * beta);
  const std::span<const double> ys(coherence.data(), n);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const Vector col = features.col(c);
    m.feature_spearman.push_back(spearman(std::span<const double>(col.data(), n), ys));
  }
  return m;
}

std::vector<std::size_t> top_loading_dims(const Vector& pc1, std::size_t count) {
  std::vector<std::size_t> order(static_cast<std::size_t>(pc1.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(pc1[static_cast<Eigen::Index>(a)]) > std::abs(pc1[static_cast<Eigen::Index>(b)]);
  });
  order.resize(std::min(count, order.size()));
  return order;
}

namespace {

std::vector<std::optional<std::size_t>> probe_regions(const EmbeddingDataset& ds,
                                                      const std::vector<ProbeProfile>& probes,
                                                      const std::vector<RegionSpec>& regions) {
  std::vector<std::optional<std::size_t>> out;
  out.reserve(probes.size());
  for (const auto& p : probes) out.push_back(assign_region(regions, ds.lat(p.row), ds.lon(p.row)));
  return out;
}

}  // namespace

std::vector<RegionalProfile> regional_profiles(const EmbeddingDataset& ds,
                                               const std::vector<ProbeProfile>& probes,
                                               const std::vector<RegionSpec>& regions) {
  validate_regions(regions);
  const auto where = probe_regions(ds, probes, regions);
  std::vector<RegionalProfile> out;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    RegionalProfile prof;
    prof.name = regions[r].name;
    prof.box = regions[r];
    std::vector<double> coh, ids;
    std::vector<std::size_t> hits(ds.dims(), 0);
    std::size_t with_pc1 = 0, with_features = 0;
    std::vector<double> feat_sum(5, 0.0);
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (where[i] != r) continue;
      const auto& p = probes[i];
      ++prof.count;
      if (!std::isnan(p.coherence)) coh.push_back(p.coherence);
      if (!std::isnan(p.local_id)) ids.push_back(p.local_id);
      if (static_cast<std::size_t>(p.pc1.size()) == ds.dims()) {
        ++with_pc1;
        for (std::size_t d : top_loading_dims(p.pc1)) ++hits[d];
      }
      if (p.features_valid) {
        ++with_features;
        for (std::size_t f = 0; f < 5; ++f) feat_sum[f] += p.features[f];
      }
    }
    prof.mean_coherence = mean_std(coh).first;
    prof.mean_local_id = mean_std(ids).first;
    if (with_pc1 > 0) {
      std::vector<std::size_t> order(ds.dims());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hits[a] > hits[b]; });
      for (std::size_t t = 0; t < std::min<std::size_t>(3, order.size()); ++t) {
        prof.top_dims.push_back({order[t], static_cast<double>(hits[order[t]]) / static_cast<double>(with_pc1)});
      }
    }
    prof.mean_features.assign(5, std::numeric_limits<double>::quiet_NaN());
    if (with_features > 0) {
      for (std::size_t f = 0; f < 5; ++f) prof.mean_features[f] = feat_sum[f] / static_cast<double>(with_features);
    }
    out.push_back(std::move(prof));
  }
  return out;
}

std::vector<DimensionImportance> dimension_importance(const EmbeddingDataset& ds,
                                                      const std::vector<ProbeProfile>& probes,
                                                      const std::vector<RegionSpec>& regions) {
  const auto where = probe_regions(ds, probes, regions);
  std::vector<DimensionImportance> out(ds.dims());
  std::vector<std::size_t> region_total(regions.size(), 0);
  std::size_t total = 0;
  for (std::size_t d = 0; d < ds.dims(); ++d) {
    out[d].dim = d;
    out[d].region_fraction.assign(regions.size(), 0.0);
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (static_cast<std::size_t>(probes[i].pc1.size()) != ds.dims()) continue;
    ++total;
    if (where[i]) ++region_total[*where[i]];
    for (std::size_t d : top_loading_dims(probes[i].pc1)) {
      out[d].global_fraction += 1.0;
      if (where[i]) out[d].region_fraction[*where[i]] += 1.0;
    }
  }
  for (auto& e : out) {
    if (total > 0) e.global_fraction /= static_cast<double>(total);
    for (std::size_t r = 0; r < regions.size(); ++r) {
      if (region_total[r] > 0) e.region_fraction[r] /= static_cast<double>(region_total[r]);
    }
  }
  return out;
}

namespace {

json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double null_to_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

json GeometricDictionary::to_json() const {
  json regs = json::array();
  for (const auto& r : regions) {
    json dims = json::array();
    for (const auto& d : r.top_dims) dims.push_back({{"dim", d.dim}, {"fraction", d.fraction}});
    json feats = json::array();
    for (double f : r.mean_features) feats.push_back(nan_to_null(f));
    regs.push_back({{"name", r.name},
                    {"lat_min", r.box.lat_min},
                    {"lat_max", r.box.lat_max},
                    {"lon_min", r.box.lon_min},
                    {"lon_max", r.box.lon_max},
                    {"count", r.count},
                    {"mean_coherence", nan_to_null(r.mean_coherence)},
                    {"mean_local_id", nan_to_null(r.mean_local_id)},
                    {"top_dims", dims},
                    {"mean_features", feats}});
  }
  json importance = json::array();
  for (const auto& d : dimension_importance) {
    importance.push_back({{"dim", d.dim}, {"global_fraction", d.global_fraction}, {"region_fraction", d.region_fraction}});
  }
  return {{"regions", regs},
          {"confidence_model", confidence_model.to_json()},
          {"dimension_importance", importance},
          {"provenance", provenance}};
}

GeometricDictionary GeometricDictionary::from_json(const json& j) {
  GeometricDictionary g;
  try {
    for (const auto& r : j.at("regions")) {
      RegionalProfile p;
      p.name = r.at("name").get<std::string>();
      p.box = {p.name, r.at("lat_min").get<double>(), r.at("lat_max").get<double>(),
               r.at("lon_min").get<double>(), r.at("lon_max").get<double>()};
      p.count = r.at("count").get<std::size_t>();
      p.mean_coherence = null_to_nan(r.at("mean_coherence"));
      p.mean_local_id = null_to_nan(r.at("mean_local_id"));
      for (const auto& d : r.at("top_dims")) {
        p.top_dims.push_back({d.at("dim").get<std::size_t>(), d.at("fraction").get<double>()});
      }
      for (const auto& f : r.at("mean_features")) p.mean_features.push_back(null_to_nan(f));
      for (const auto& d : p.top_dims) {
        if (!(d.fraction >= 0.0 && d.fraction <= 1.0)) throw DataError("importance fraction outside [0, 1]");
      }
      g.regions.push_back(std::move(p));
    }
    g.confidence_model = ConfidenceModel::from_json(j.at("confidence_model"));
    for (const auto& d : j.at("dimension_importance")) {
      g.dimension_importance.push_back({d.at("dim").get<std::size_t>(), d.at("global_fraction").get<double>(),
                                        d.at("region_fraction").get<std::vector<double>>()});
    }
    g.provenance = j.at("provenance");
  } catch (const json::exception& e) {
    throw DataError("invalid geometric dictionary: " + std::string(e.what()));
  }
  return g;
}

std::string GeometricDictionary::hash() const { return sha256_hex(to_json().dump()); }

const RegionalProfile* GeometricDictionary::find_region(std::string_view name) const {
  for (const auto& r : regions) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

FeatureConfig GeometricDictionary::feature_config() const {
  if (!provenance.contains("feature_config")) throw DataError("dictionary provenance lacks feature_config");
  return FeatureConfig::from_json(provenance.at("feature_config"));
}

GeometricDictionary build_geometric_dictionary(std::vector<RegionalProfile> profiles, ConfidenceModel model,
                                               std::vector<DimensionImportance> importance,
                                               const std::vector<RegionSpec>& regions, json provenance) {
  for (const auto& r : regions) {
    const bool present = std::any_of(profiles.begin(), profiles.end(),
                                     [&](const RegionalProfile& p) { return p.name == r.name; });
    if (!present) throw DataError("geometric dictionary is missing a profile for region '" + r.name + "'");
  }
  if (model.features.size() != 5 || model.coefficients.size() != 5) {
    throw DataError("confidence model must have exactly five features");
  }
  for (const auto& d : importance) {
    if (!(d.global_fraction >= 0.0 && d.global_fraction <= 1.0)) throw DataError("importance fraction outside [0, 1]");
  }
  GeometricDictionary g;
  g.regions = std::move(profiles);
  g.confidence_model = std::move(model);
  g.dimension_importance = std::move(importance);
  g.provenance = std::move(provenance);
  return g;
}

GeometricDictionary load_geometric_dictionary(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("malformed geometric dictionary JSON: " + std::string(e.what()));
  }
  return GeometricDictionary::from_json(j);
}

void save_geometric_dictionary(const GeometricDictionary& dict, const std::filesystem::path& path) {
  io::write_file_atomic(path, dict.to_json().dump(2) + "\n");
}

}  // namespace embgeo
