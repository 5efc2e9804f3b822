#include "embgeo/composition.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace embgeo {

std::string_view shift_method_name(ShiftMethod m) {
  switch (m) {
    case ShiftMethod::global_pc: return "global_pc";
    case ShiftMethod::local_pc: return "local_pc";
    case ShiftMethod::probe_global: return "probe_global";
    case ShiftMethod::probe_regional: return "probe_regional";
    case ShiftMethod::probe_local: return "probe_local";
    case ShiftMethod::random: return "random";
    case ShiftMethod::geographic_baseline: return "geographic_baseline";
  }
  return "local_pc";
}

const std::vector<ShiftMethod>& all_shift_methods() {
  static const std::vector<ShiftMethod> methods = {
      ShiftMethod::global_pc,      ShiftMethod::local_pc,    ShiftMethod::probe_global,
      ShiftMethod::probe_regional, ShiftMethod::probe_local, ShiftMethod::random,
      ShiftMethod::geographic_baseline};
  return methods;
}

ShiftMethod parse_shift_method(std::string_view name) {
  for (auto m : all_shift_methods()) {
    if (shift_method_name(m) == name) return m;
  }
  throw ConfigError("unknown shift method '" + std::string(name) + "'");
}

std::string_view analogy_mode_name(AnalogyMode m) {
  return m == AnalogyMode::naive ? "naive" : "tangent_projected";
}

AnalogyMode parse_analogy_mode(std::string_view name) {
  if (name == "naive") return AnalogyMode::naive;
  if (name == "tangent_projected") return AnalogyMode::tangent_projected;
  throw ConfigError("unknown analogy mode '" + std::string(name) + "'");
}

namespace {

Vector covariate_values(const EmbeddingDataset& ds, std::size_t col, std::span<const std::size_t> rows) {
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = ds.covariate(rows[i], col);
  return y;
}

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double population_std(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().mean());
}

}  // namespace

CompositionLab::CompositionLab(const EmbeddingDataset& ds, const KnnIndex& index,
                               std::vector<std::string> properties, std::vector<RegionSpec> regions,
                               CompositionOptions options)
    : ds_(ds), index_(index), properties_(std::move(properties)), regions_(std::move(regions)),
      options_(options) {
  if (index_.size() != ds_.size()) throw DataError("index does not match the dataset");
  if (ds_.size() < 2) throw DataError("composition experiments need at least 2 rows");
  if (options_.k < 2 || options_.k + 1 > ds_.size()) throw ConfigError("k must lie in [2, N-1]");
  if (options_.top_p < 1) throw ConfigError("top_p must be >= 1");
  if (options_.analogy_sign != 1 && options_.analogy_sign != -1) throw ConfigError("analogy_sign must be +1 or -1");
  for (const auto& p : properties_) cols_.push_back(ds_.require_covariate(p));
  validate_regions(regions_);
  global_rows_ = sample_rows(ds_.size(), options_.global_sample, options_.seed ^ fnv1a64("global"));
  global_x_ = ds_.embedding_matrix(global_rows_);
  global_eig_ = eigendecompose(covariance_matrix(global_x_, options_.threads));
}

std::size_t CompositionLab::property_col(const std::string& property) const {
  for (std::size_t i = 0; i < properties_.size(); ++i) {
    if (properties_[i] == property) {
      if (ds_.stats().constant[cols_[i]]) throw DataError("property '" + property + "' is constant");
      return cols_[i];
    }
  }
  throw DataError("property '" + property + "' is not configured for this experiment");
}

std::shared_ptr<const CompositionLab::Neighborhood> CompositionLab::neighborhood(std::size_t source) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = hoods_.find(source);
    if (it != hoods_.end()) return it->second;
  }
  auto hood = std::make_shared<Neighborhood>();
  hood->rows = neighborhood_rows(index_, source, options_.k);
  hood->x = ds_.embedding_matrix(hood->rows);
  LocalPcaOptions pca_options;
  pca_options.tangent_dim = options_.tangent_dim;
  hood->pca = local_pca_rows(ds_, hood->rows, pca_options);
  hood->pca.probe = source;
  hood->pca.k = options_.k;
  std::lock_guard<std::mutex> lock(mutex_);
  return hoods_.emplace(source, std::move(hood)).first->second;
}

Vector CompositionLab::orient(Vector u, const Neighborhood& hood, std::size_t col) const {
  const Matrix centered = hood.x.rowwise() - hood.x.colwise().mean();
  const Vector scores = centered * u;
  const Vector y = covariate_values(ds_, col, hood.rows);
  if (pearson(as_span(scores), as_span(y)) < 0.0) u = -u;
  return u;
}

PcSelection CompositionLab::global_pc(const std::string& property) const {
  const std::size_t col = property_col(property);
  const Vector y = covariate_values(ds_, col, global_rows_);
  const auto p = std::min<std::size_t>(options_.top_p, ds_.dims());
  return select_pc_direction(global_x_, global_eig_.eigenvectors, as_span(y), p);
}

const ProbeModel& CompositionLab::global_probe(const std::string& property) const {
  const std::size_t col = property_col(property);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = global_probes_.find(property);
    if (it != global_probes_.end()) return it->second;
  }
  auto model = fit_ridge_probe(global_x_, covariate_values(ds_, col, global_rows_), options_.alpha);
  model.property = property;
  model.scale = ProbeScale::global;
  std::lock_guard<std::mutex> lock(mutex_);
  return global_probes_.emplace(property, std::move(model)).first->second;
}

Vector CompositionLab::direction(std::size_t source, const std::string& property, ShiftMethod method) const {
  if (source >= ds_.size()) throw DataError("source row " + std::to_string(source) + " out of range");
  const std::size_t col = property_col(property);
  const auto hood = neighborhood(source);
  Vector u;
  switch (method) {
    case ShiftMethod::global_pc:
      u = global_pc(property).direction;
      break;
    case ShiftMethod::local_pc: {
      if (hood->pca.degenerate) throw DataError("degenerate neighborhood at row " + std::to_string(source));
      const Vector y = covariate_values(ds_, col, hood->rows);
      const auto p = std::min<std::size_t>(options_.top_p, ds_.dims());
      u = select_pc_direction(hood->x, hood->pca.eigenvectors, as_span(y), p).direction;
      break;
    }
    case ShiftMethod::probe_global: {
      const auto& m = global_probe(property);
      if (m.zero_direction) throw DataError("global probe for '" + property + "' has a zero direction");
      u = m.direction;
      break;
    }
    case ShiftMethod::probe_regional: {
      const auto region = assign_region(regions_, ds_.lat(source), ds_.lon(source));
      if (!region) throw DataError("source row " + std::to_string(source) + " lies in no region");
      const auto key = std::make_pair(*region, property);
      std::shared_ptr<const ProbeModel> model;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = regional_probes_.find(key);
        if (it != regional_probes_.end()) model = it->second;
      }
      if (!model) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds_.size(); ++i) {
          if (regions_[*region].contains(ds_.lat(i), ds_.lon(i))) rows.push_back(i);
        }
        auto fitted = std::make_shared<ProbeModel>(
            fit_ridge_probe(ds_.embedding_matrix(rows), covariate_values(ds_, col, rows), options_.alpha));
        fitted->property = property;
        fitted->scale = ProbeScale::regional;
        fitted->scope = regions_[*region].name;
        std::lock_guard<std::mutex> lock(mutex_);
        model = regional_probes_.emplace(key, std::move(fitted)).first->second;
      }
      if (model->zero_direction) throw DataError("regional probe has a zero direction");
      u = model->direction;
      break;
    }
    case ShiftMethod::probe_local: {
      const auto m = fit_ridge_probe(hood->x, covariate_values(ds_, col, hood->rows), options_.alpha);
      if (m.zero_direction) throw DataError("local probe has a zero direction");
      u = m.direction;
      break;
    }
    case ShiftMethod::random: {
      std::uint64_t seed = options_.seed ^ fnv1a64(property);
      seed ^= 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(source) + 1);
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      u.resize(static_cast<Eigen::Index>(ds_.dims()));
      do {
        for (auto& v : u) v = normal(rng);
      } while (u.norm() == 0.0);
      u.normalize();
      break;
    }
    case ShiftMethod::geographic_baseline:
      throw ConfigError("geographic_baseline has no direction");
  }
  return orient(std::move(u), *hood, col);
}

std::size_t CompositionLab::retrieve(const Vector& point, std::optional<std::size_t> exclude) const {
  return index_.search(point, 1, exclude).indices.front();
}

double CompositionLab::non_target(std::size_t col, std::size_t reference, std::size_t retrieved) const {
  const auto& st = ds_.stats();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c : cols_) {
    if (c == col || st.constant[c]) continue;
    total += std::abs(ds_.covariate(retrieved, c) - ds_.covariate(reference, c)) / st.stddev[c];
    ++count;
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

ShiftOutcome CompositionLab::targeted_shift(std::size_t source, const std::string& property,
                                            ShiftMethod method, double n) const {
  if (method == ShiftMethod::geographic_baseline) return geographic_baseline(source, property, n);
  ShiftOutcome out;
  out.source = source;
  out.property = property;
  out.method = method;
  out.magnitude = n;
  try {
    const std::size_t col = property_col(property);
    if (source >= ds_.size()) throw DataError("source row " + std::to_string(source) + " out of range");
    if (n == 0.0) {
      out.retrieved = source;
      out.target_change = 0.0;
      out.target_change_local = 0.0;
      out.non_target_deviation = 0.0;
      return out;
    }
    const Vector u = direction(source, property, method);
    const auto hood = neighborhood(source);
    const Matrix centered = hood->x.rowwise() - hood->x.colwise().mean();
    const Vector proj = centered * u;
    out.sigma_dir = population_std(proj);
    if (!(out.sigma_dir > 0.0)) throw DataError("neighborhood has zero spread along the direction");
    const Vector shifted = ds_.row_vector(source) + n * out.sigma_dir * u;
    const std::size_t r = retrieve(shifted, source);
    out.retrieved = r;
    const double delta = ds_.covariate(r, col) - ds_.covariate(source, col);
    out.target_change = delta / ds_.stats().stddev[col];
    const double local_sd = population_std(covariate_values(ds_, col, hood->rows));
    if (local_sd > 0.0) out.target_change_local = delta / local_sd;
    out.non_target_deviation = non_target(col, source, r);
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

ShiftOutcome CompositionLab::geographic_baseline(std::size_t source, const std::string& property,
                                                 double n) const {
  ShiftOutcome out;
  out.source = source;
  out.property = property;
  out.method = ShiftMethod::geographic_baseline;
  out.magnitude = n;
  try {
    const std::size_t col = property_col(property);
    if (source >= ds_.size()) throw DataError("source row " + std::to_string(source) + " out of range");
    const double sigma = ds_.stats().stddev[col];
    const double y0 = ds_.covariate(source, col);
    const double sign = n < 0.0 ? -1.0 : 1.0;
    std::optional<std::size_t> best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ds_.size(); ++i) {
      if (sign * (ds_.covariate(i, col) - y0) < std::abs(n) * sigma) continue;
      const double dlat = ds_.lat(i) - ds_.lat(source);
      const double dlon = ds_.lon(i) - ds_.lon(source);
      const double d2 = dlat * dlat + dlon * dlon;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    if (!best) throw DataError("no row changes '" + property + "' by the requested amount");
    out.retrieved = best;
    const double delta = ds_.covariate(*best, col) - y0;
    out.target_change = delta / sigma;
    out.non_target_deviation = non_target(col, source, *best);
    if (*best == source) out.target_change_local = 0.0;
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

TransferOutcome CompositionLab::property_transfer(std::size_t a, std::size_t b, const std::string& property,
                                                  std::optional<std::size_t> j) const {
  TransferOutcome out;
  out.a = a;
  out.b = b;
  out.property = property;
  try {
    const std::size_t col = property_col(property);
    if (a >= ds_.size() || b >= ds_.size()) throw DataError("transfer row out of range");
    const std::size_t jj = j.value_or(options_.transfer_components);
    if (jj < 1 || jj > ds_.dims()) throw ConfigError("transfer component count must lie in [1, D]");
    const auto hood = neighborhood(a);
    if (hood->pca.degenerate) throw DataError("degenerate local basis at row " + std::to_string(a));
    const std::size_t candidates = std::min<std::size_t>(ds_.dims(), std::max(options_.top_p, jj));
    const Matrix centered = hood->x.rowwise() - hood->x.colwise().mean();
    const Vector y = covariate_values(ds_, col, hood->rows);
    std::vector<double> score(candidates);
    for (std::size_t p = 0; p < candidates; ++p) {
      const Vector s = centered * hood->pca.eigenvectors.col(static_cast<Eigen::Index>(p));
      score[p] = std::abs(pearson(as_span(s), as_span(y)));
    }
    std::vector<std::size_t> order(candidates);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return score[l] > score[r]; });
    order.resize(jj);
    std::sort(order.begin(), order.end());
    out.components = order;
    const Vector xa = ds_.row_vector(a);
    const Vector diff = ds_.row_vector(b) - xa;
    out.transferred = xa;
    for (std::size_t p : order) {
      const auto v = hood->pca.eigenvectors.col(static_cast<Eigen::Index>(p));
      out.transferred += v * v.dot(diff);
    }
    const std::size_t r = retrieve(out.transferred, std::nullopt);
    out.retrieved = r;
    out.target_error = std::abs(ds_.covariate(r, col) - ds_.covariate(b, col)) / ds_.stats().stddev[col];
    out.non_target_deviation = non_target(col, a, r);
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

AnalogyOutcome CompositionLab::analogy(std::size_t a, std::size_t b, std::size_t c,
                                       const std::string& property, AnalogyMode mode) const {
  AnalogyOutcome out;
  out.a = a;
  out.b = b;
  out.c = c;
  out.property = property;
  out.mode = mode;
  try {
    const std::size_t col = property_col(property);
    if (a >= ds_.size() || b >= ds_.size() || c >= ds_.size()) throw DataError("analogy row out of range");
    Vector offset = static_cast<double>(options_.analogy_sign) * (ds_.row_vector(b) - ds_.row_vector(a));
    if (mode == AnalogyMode::tangent_projected) {
      const auto hood = neighborhood(c);
      if (hood->pca.degenerate || hood->pca.basis.cols() == 0) {
        throw DataError("degenerate tangent basis at row " + std::to_string(c));
      }
      const Matrix& t = hood->pca.basis;
      offset = t * (t.transpose() * offset);
    }
    const Vector target = ds_.row_vector(c) + offset;
    const std::size_t r = retrieve(target, std::nullopt);
    out.retrieved = r;
    out.target_error = std::abs(ds_.covariate(r, col) - ds_.covariate(b, col)) / ds_.stats().stddev[col];
    out.non_target_deviation = non_target(col, c, r);
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

double shift_precision(std::span<const ShiftOutcome> outcomes) {
  std::size_t total = 0, hits = 0;
  for (const auto& o : outcomes) {
    if (o.failed) continue;
    ++total;
    const double n = std::abs(o.magnitude);
    if (o.target_change * (o.magnitude < 0.0 ? -1.0 : 1.0) >= 0.5 * n && o.non_target_deviation < n) ++hits;
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

std::vector<ShiftAggregate> aggregate_outcomes(std::span<const ShiftOutcome> outcomes) {
  std::map<std::pair<ShiftMethod, double>, std::vector<const ShiftOutcome*>> groups;
  for (const auto& o : outcomes) groups[{o.method, o.magnitude}].push_back(&o);
  std::vector<ShiftAggregate> out;
  for (const auto& [key, members] : groups) {
    ShiftAggregate agg;
    agg.method = key.first;
    agg.magnitude = key.second;
    std::vector<ShiftOutcome> ok;
    std::size_t local_count = 0;
    for (const auto* o : members) {
      if (o->failed) {
        ++agg.failures;
        continue;
      }
      ok.push_back(*o);
      agg.mean_target_change += o->target_change;
      agg.mean_abs_target_change += std::abs(o->target_change);
      agg.mean_non_target += o->non_target_deviation;
      if (!std::isnan(o->target_change_local)) {
        agg.mean_target_change_local += o->target_change_local;
        ++local_count;
      }
    }
    agg.count = ok.size();
    if (agg.count > 0) {
      const double c = static_cast<double>(agg.count);
      agg.mean_target_change /= c;
      agg.mean_abs_target_change /= c;
      agg.mean_non_target /= c;
    }
    agg.mean_target_change_local = local_count > 0 ? agg.mean_target_change_local / static_cast<double>(local_count)
                                                   : std::numeric_limits<double>::quiet_NaN();
    agg.precision = shift_precision(ok);
    out.push_back(agg);
  }
  return out;
}

ExperimentSuite experiment_suite(const CompositionLab& lab, std::span<const std::size_t> sources,
                                 const std::vector<std::string>& properties,
                                 const std::vector<ShiftMethod>& methods,
                                 const std::vector<double>& magnitudes) {
  const std::size_t per_source = properties.size() * methods.size() * magnitudes.size();
  ExperimentSuite suite;
  suite.outcomes.resize(sources.size() * per_source);
  parallel_for(sources.size(), lab.options().threads, [&](std::size_t s) {
    std::size_t slot = s * per_source;
    for (const auto& p : properties)
      for (auto m : methods)
        for (double n : magnitudes) suite.outcomes[slot++] = lab.targeted_shift(sources[s], p, m, n);
  });
  suite.aggregates = aggregate_outcomes(suite.outcomes);
  return suite;
}

}  // namespace embgeo
