#include "embgeo/probes.hpp"

#include <cmath>

namespace embgeo {

std::string_view probe_scale_name(ProbeScale s) {
  switch (s) {
    case ProbeScale::global: return "global";
    case ProbeScale::regional: return "regional";
    case ProbeScale::local: return "local";
  }
  return "global";
}

ProbeModel fit_ridge_probe(const Matrix& x, const Vector& y, double alpha) {
  if (x.rows() < 2) throw DataError("ridge probe needs at least 2 rows");
  if (x.rows() != y.size()) throw DataError("ridge probe: X and y row counts differ");
  if (!(alpha >= 0.0)) throw ConfigError("ridge alpha must be >= 0");
  if (!y.allFinite()) throw DataError("ridge probe: non-finite target");
  ProbeModel m;
  m.count = static_cast<std::size_t>(x.rows());
  const Vector xm = x.colwise().mean().transpose();
  const double ym = y.mean();
  const Matrix xc = x.rowwise() - xm.transpose();
  const Vector yc = y.array() - ym;
  const double sst = yc.squaredNorm();
  if (!(sst > 0.0)) {
    m.coefficients = Vector::Zero(x.cols());
    m.direction = Vector::Zero(x.cols());
    m.intercept = ym;
    m.zero_direction = true;
    return m;
  }
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  m.coefficients = gram.ldlt().solve(xc.transpose() * yc);
  m.intercept = ym - xm.dot(m.coefficients);
  const double norm = m.coefficients.norm();
  if (norm > 0.0 && std::isfinite(norm)) {
    m.direction = m.coefficients / norm;
  } else {
    m.direction = Vector::Zero(x.cols());
    m.zero_direction = true;
  }
  const double sse = (yc - xc * m.coefficients).squaredNorm();
  m.r2 = 1.0 - sse / sst;
  return m;
}

PcSelection select_pc_direction(const Matrix& neighborhood, const Matrix& basis,
                                std::span<const double> covariate, std::size_t top_p) {
  if (static_cast<std::size_t>(neighborhood.rows()) != covariate.size()) {
    throw DataError("one covariate value per neighborhood row is required");
  }
  if (top_p < 1 || top_p > static_cast<std::size_t>(basis.cols())) {
    throw ConfigError("top_p=" + std::to_string(top_p) + " exceeds the " +
                      std::to_string(basis.cols()) + " available components");
  }
  double lo = covariate[0], hi = covariate[0];
  for (double v : covariate) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) throw DataError("covariate has zero variance in the neighborhood");
  const Matrix centered = neighborhood.rowwise() - neighborhood.colwise().mean();
  PcSelection out;
  double best = -1.0;
  for (std::size_t p = 0; p < top_p; ++p) {
    const Vector scores = centered * basis.col(static_cast<Eigen::Index>(p));
    const double r = pearson(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                             covariate);
    if (std::abs(r) > best) {
      best = std::abs(r);
      out.pc_index = p;
      out.correlation = r;
    }
  }
  out.direction = basis.col(static_cast<Eigen::Index>(out.pc_index));
  if (out.correlation < 0.0) out.direction = -out.direction;
  return out;
}

CosineStats summarize_cosines(std::vector<double> values) {
  CosineStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

DirectionStability direction_stability(const std::vector<ProbeModel>& models,
                                       const std::vector<std::string>& local_region) {
  DirectionStability out;
  const ProbeModel* global = nullptr;
  std::vector<const ProbeModel*> regional, local;
  for (const auto& m : models) {
    if (out.property.empty()) out.property = m.property;
    if (m.property != out.property) throw DataError("direction_stability needs models of one property");
    if (m.zero_direction) {
      ++out.excluded_zero;
      continue;
    }
    switch (m.scale) {
      case ProbeScale::global:
        if (!global) global = &m;
        break;
      case ProbeScale::regional: regional.push_back(&m); break;
      case ProbeScale::local: local.push_back(&m); break;
    }
  }
  if (models.size() < 2) throw DataError("direction_stability needs at least 2 models");
  auto cosine = [](const ProbeModel* a, const ProbeModel* b) { return alignment(a->direction, b->direction); };
  if (global) {
    for (const auto* m : local) out.local_vs_global.push_back(cosine(m, global));
    for (const auto* m : regional) out.regional_vs_global.push_back(cosine(m, global));
  }
  std::size_t li = 0;
  std::vector<double> pairwise;
  for (const auto& m : models) {
    if (m.scale != ProbeScale::local) continue;
    const std::size_t slot = li++;
    if (m.zero_direction || slot >= local_region.size()) continue;
    for (const auto* r : regional) {
      if (r->scope == local_region[slot]) out.local_vs_regional.push_back(cosine(&m, r));
    }
  }
  for (std::size_t a = 0; a < local.size(); ++a)
    for (std::size_t b = a + 1; b < local.size(); ++b) pairwise.push_back(cosine(local[a], local[b]));
  out.local_global = summarize_cosines(out.local_vs_global);
  out.regional_global = summarize_cosines(out.regional_vs_global);
  out.local_regional = summarize_cosines(out.local_vs_regional);
  out.local_pairwise = summarize_cosines(std::move(pairwise));
  return out;
}

std::vector<std::size_t> neighborhood_rows(const KnnIndex& index, std::size_t source, std::size_t k) {
  const auto nn = index.search_row(source, k, true);
  std::vector<std::size_t> rows;
  rows.reserve(k + 1);
  rows.push_back(source);
  rows.insert(rows.end(), nn.indices.begin(), nn.indices.end());
  return rows;
}

namespace {

Vector column_values(const EmbeddingDataset& ds, std::size_t col, std::span<const std::size_t> rows) {
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = ds.covariate(rows[i], col);
  return y;
}

}  // namespace

ProbeSuite fit_probe_suite(const EmbeddingDataset& ds, const KnnIndex& index,
                           const std::vector<std::string>& properties,
                           const std::vector<RegionSpec>& regions,
                           std::span<const std::size_t> sources, const ProbeSuiteOptions& options) {
  std::vector<std::size_t> cols;
  for (const auto& p : properties) cols.push_back(ds.require_covariate(p));
  const auto global_rows = sample_rows(ds.size(), options.global_sample, options.seed);
  const Matrix xg = ds.embedding_matrix(global_rows);

  std::vector<std::vector<std::size_t>> region_rows(regions.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (auto r = assign_region(regions, ds.lat(i), ds.lon(i))) region_rows[*r].push_back(i);
  }
  std::vector<std::string> source_region(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (auto r = assign_region(regions, ds.lat(sources[s]), ds.lon(sources[s]))) {
      source_region[s] = regions[*r].name;
    }
  }
  std::vector<std::vector<std::size_t>> hoods(sources.size());
  parallel_for(sources.size(), options.threads,
               [&](std::size_t s) { hoods[s] = neighborhood_rows(index, sources[s], options.k); });

  ProbeSuite suite;
  for (std::size_t p = 0; p < properties.size(); ++p) {
    std::vector<ProbeModel> models;
    auto global = fit_ridge_probe(xg, column_values(ds, cols[p], global_rows), options.alpha);
    global.property = properties[p];
    global.scale = ProbeScale::global;
    models.push_back(std::move(global));
    for (std::size_t r = 0; r < regions.size(); ++r) {
      if (region_rows[r].size() < 2) continue;
      auto m = fit_ridge_probe(ds.embedding_matrix(region_rows[r]),
                               column_values(ds, cols[p], region_rows[r]), options.alpha);
      m.property = properties[p];
      m.scale = ProbeScale::regional;
      m.scope = regions[r].name;
      models.push_back(std::move(m));
    }
    std::vector<ProbeModel> locals(sources.size());
    parallel_for(sources.size(), options.threads, [&](std::size_t s) {
      auto m = fit_ridge_probe(ds.embedding_matrix(hoods[s]), column_values(ds, cols[p], hoods[s]),
                               options.alpha);
      m.property = properties[p];
      m.scale = ProbeScale::local;
      m.scope = std::to_string(sources[s]);
      locals[s] = std::move(m);
    });
    for (auto& m : locals) models.push_back(std::move(m));
    suite.stability.push_back(direction_stability(models, source_region));
    for (auto& m : models) suite.models.push_back(std::move(m));
  }
  return suite;
}

}  // namespace embgeo
