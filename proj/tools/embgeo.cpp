// embgeo: command-line driver for the embedding-geometry toolkit.
//
//   embgeo <subcommand> [--config run.json] [--dataset path] [--out dir] [--seed n] [--threads n]
//
// Every analysis subcommand writes its artifacts plus a manifest.json into the
// output directory. Exit codes: 0 ok, 1 usage/config, 2 data, 3 internal.

#include "embgeo/clustering.hpp"
#include "embgeo/coherence.hpp"
#include "embgeo/composition.hpp"
#include "embgeo/io.hpp"
#include "embgeo/synth.hpp"
#include "embgeo/tool_server.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace embgeo;

namespace {

const std::vector<std::pair<std::string, std::string>> kSubcommands = {
    {"synth", "generate a synthetic manifold dataset with its oracle"},
    {"ingest", "validate, normalize and optionally subsample a dataset"},
    {"global-geometry", "covariance spectrum, year stability, dimension clusters"},
    {"intrinsic-dim", "MLE intrinsic-dimension field and summaries"},
    {"local-geometry", "local PCA probe survey at one scale"},
    {"multiscale", "local PCA probe survey across neighborhood sizes"},
    {"probes", "ridge concept probes and direction stability"},
    {"shift", "targeted shift experiments"},
    {"transfer", "property transfer experiments"},
    {"analogy", "analogy experiments"},
    {"coherence", "retrieval coherence scores"},
    {"confidence", "fit the retrieval-confidence model"},
    {"dictionary", "build the geometric dictionary"},
    {"serve", "run the JSON tool service"},
};

// Reads one config block, recording every value it hands out so unknown keys
// can be rejected and the resolved parameters written to the manifest.
class Params {
 public:
  Params(json block, std::string path) : block_(std::move(block)), path_(std::move(path)) {
    if (block_.is_null()) block_ = json::object();
    if (!block_.is_object()) throw ConfigError("config key '" + path_ + "' must be an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    T value = fallback;
    if (block_.contains(key)) {
      try {
        value = block_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError("config key '" + name(key) + "' has the wrong type");
      }
    }
    resolved_[key] = value;
    return value;
  }

  std::optional<std::string> path(const std::string& key, const fs::path& base) {
    used_.insert(key);
    if (!block_.contains(key) || block_.at(key).is_null()) {
      resolved_[key] = nullptr;
      return std::nullopt;
    }
    if (!block_.at(key).is_string()) throw ConfigError("config key '" + name(key) + "' must be a path string");
    const auto raw = block_.at(key).get<std::string>();
    resolved_[key] = raw;
    fs::path p = raw;
    if (p.is_relative()) p = base / p;
    return p.string();
  }

  std::size_t positive(const std::string& key, std::size_t fallback) {
    const auto v = get<long long>(key, static_cast<long long>(fallback));
    if (v < 1) throw ConfigError("config key '" + name(key) + "' must be >= 1");
    return static_cast<std::size_t>(v);
  }

  std::vector<std::size_t> k_list(const std::string& key, std::vector<std::size_t> fallback) {
    auto ks = get<std::vector<long long>>(key, {fallback.begin(), fallback.end()});
    if (ks.empty()) throw ConfigError("config key '" + name(key) + "' must not be empty");
    std::vector<std::size_t> out;
    for (auto k : ks) {
      if (k < 1) throw ConfigError("config key '" + name(key) + "' entries must be >= 1");
      out.push_back(static_cast<std::size_t>(k));
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : block_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + name(key) + "'");
    }
  }

  std::string name(const std::string& key) const { return path_ + "." + key; }
  const json& resolved() const { return resolved_; }

 private:
  json block_;
  std::string path_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

struct Run {
  std::string subcommand;
  json config = json::object();
  fs::path base_dir = ".";
  std::optional<fs::path> dataset_path;
  fs::path out = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  std::uint64_t sub_seed() const { return seed + fnv1a64(subcommand); }

  std::string dataset_hash;
  std::vector<std::string> warnings;
  json outputs = json::array();

  void write(const std::string& name, const std::string& content) {
    io::write_file_atomic(out / name, content);
    outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}});
  }

  void record_file(const std::string& name) {
    outputs.push_back({{"file", name}, {"sha256", sha256_hex(io::read_file(out / name))}});
  }

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

EmbeddingDataset load(const Run& run) {
  if (!run.dataset_path) throw ConfigError("no dataset given (config key 'dataset' or --dataset)");
  return load_dataset(*run.dataset_path, infer_format(*run.dataset_path));
}

std::vector<std::size_t> probe_rows(const EmbeddingDataset& ds, std::size_t count, std::uint64_t seed) {
  if (count >= ds.size()) {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return select_probes(ds, count, seed);
}

std::vector<std::string> property_list(Params& p, const EmbeddingDataset& ds) {
  const auto& names = ds.covariate_names();
  std::vector<std::string> first(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(6, names.size())));
  auto props = p.get<std::vector<std::string>>("properties", first);
  if (props.empty()) throw ConfigError("config key '" + p.name("properties") + "' is empty and the dataset has no covariates");
  for (const auto& name : props) ds.require_covariate(name);
  return props;
}

std::vector<RegionSpec> region_list(Params& p, const Run& run) {
  const auto path = p.path("regions", run.base_dir);
  return path ? load_regions(*path) : std::vector<RegionSpec>{};
}

SpreadMode spread_mode(const std::string& name, const std::string& key) {
  if (name == "zscore_std") return SpreadMode::zscore_std;
  if (name == "raw_cv") return SpreadMode::raw_cv;
  throw ConfigError("config key '" + key + "' must be zscore_std or raw_cv");
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

void write_coords(io::CsvWriter& w, const EmbeddingDataset& ds, std::optional<std::size_t> row) {
  if (row) {
    w.field(ds.lat(*row)).field(ds.lon(*row));
  } else {
    w.field(std::numeric_limits<double>::quiet_NaN()).field(std::numeric_limits<double>::quiet_NaN());
  }
}

// ---------------------------------------------------------------------------

json cmd_synth(Run& run, Params& p) {
  json manifold = p.get<json>("manifold", json::object());
  if (manifold.contains("seed")) {
    throw ConfigError("config key 'synth.manifold.seed' is not allowed; randomness comes from the top-level seed");
  }
  manifold["seed"] = run.sub_seed();
  ManifoldSpec spec;
  try {
    spec = manifold_spec_from_json(manifold);
  } catch (const json::exception& e) {
    throw ConfigError("config key 'synth.manifold': " + std::string(e.what()));
  }
  const auto planted = p.get<long long>("planted_properties", 0);
  const auto patch_props = p.get<long long>("patch_properties", 0);
  const double property_noise = p.get<double>("property_noise", 0.0);
  const bool include_latent = p.get<bool>("oracle_latent", true);
  if (planted < 0 || patch_props < 0) throw ConfigError("property counts must be >= 0");
  p.finish();

  SynthResult result = generate_manifold(spec);
  if (planted > 0) {
    std::mt19937_64 rng(run.sub_seed() ^ 0x5bd1e995ull);
    std::vector<Vector> dirs;
    for (long long j = 0; j < planted; ++j) dirs.push_back(random_orthonormal_frame(spec.D, 1, rng).col(0));
    result = attach_planted_properties(std::move(result), dirs, property_noise, run.sub_seed() + 1);
  }
  if (patch_props > 0) {
    if (spec.kind != ManifoldKind::heterogeneous_patchwork) {
      throw ConfigError("config key 'synth.patch_properties' needs a heterogeneous_patchwork manifold");
    }
    result = attach_patch_properties(std::move(result), static_cast<std::size_t>(patch_props), property_noise,
                                     run.sub_seed() + 2);
  }
  save_dataset(result.dataset, run.out / "dataset");
  for (const char* f : {"meta.json", "vectors.f32le", "covariates.f32le", "coords.f32le"}) {
    run.record_file(std::string("dataset/") + f);
  }
  run.write("oracle.json", dump(oracle_to_json(result.oracle, include_latent)));
  run.dataset_hash = result.dataset.content_hash();
  json params = p.resolved();
  params["manifold"] = manifold_spec_to_json(spec);
  return params;
}

json cmd_ingest(Run& run, Params& p) {
  const bool zscore = p.get<bool>("zscore", false);
  const auto per_group = p.get<long long>("per_group", 0);
  const auto group_by = p.get<std::string>("group_by", "year");
  const bool csv = p.get<bool>("write_csv", false);
  p.finish();
  if (per_group < 0) throw ConfigError("config key 'ingest.per_group' must be >= 0");
  GroupKey key;
  if (group_by == "year") {
    key = GroupKey::year;
  } else if (group_by == "elevation_band") {
    key = GroupKey::elevation_band;
  } else {
    throw ConfigError("config key 'ingest.group_by' must be year or elevation_band");
  }

  EmbeddingDataset ds = load(run);
  run.dataset_hash = ds.content_hash();
  if (per_group > 0) ds = stratified_subsample(ds, static_cast<std::size_t>(per_group), key, run.sub_seed());
  if (zscore) ds = zscore_covariates(ds);

  save_dataset(ds, run.out / "dataset");
  for (const char* f : {"meta.json", "vectors.f32le", "covariates.f32le", "coords.f32le"}) {
    run.record_file(std::string("dataset/") + f);
  }
  if (csv) {
    save_dataset_csv(ds, run.out / "dataset.csv");
    run.record_file("dataset.csv");
  }
  io::CsvWriter w({"variable", "mean", "std", "constant"});
  for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
    w.field(ds.covariate_names()[j]).field(ds.stats().mean[j]).field(ds.stats().stddev[j]);
    w.field(ds.stats().constant[j] ? "true" : "false");
    w.end_row();
    if (ds.stats().constant[j]) run.warn("covariate '" + ds.covariate_names()[j] + "' is constant");
  }
  run.write("covariate_stats.csv", w.str());
  json params = p.resolved();
  params["rows_out"] = ds.size();
  return params;
}

json cmd_global_geometry(Run& run, Params& p) {
  const auto top_p = p.positive("year_top_p", 5);
  const double threshold = p.get<double>("corr_threshold", 0.5);
  const auto k_min = p.positive("k_min", 2);
  const auto k_max_cfg = p.positive("k_max", 30);
  p.finish();

  const auto ds = load(run);
  run.dataset_hash = ds.content_hash();
  const auto eig = eigendecompose(covariance_matrix(ds, run.threads));
  const auto D = ds.dims();

  io::CsvWriter spectrum({"component", "eigenvalue", "variance_fraction", "cumulative_fraction"});
  double cumulative = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    cumulative += eig.variance_fraction[static_cast<Eigen::Index>(i)];
    spectrum.field(i + 1).field(eig.eigenvalues[static_cast<Eigen::Index>(i)]);
    spectrum.field(eig.variance_fraction[static_cast<Eigen::Index>(i)]).field(cumulative);
    spectrum.end_row();
  }
  run.write("spectrum.csv", spectrum.str());

  io::CsvWriter angles({"year_a", "year_b", "component", "angle_deg"});
  if (ds.distinct_years().size() >= 2) {
    const auto stab = per_year_stability(ds, std::min(top_p, D), run.threads);
    for (const auto& pair : stab.pairs) {
      for (std::size_t c = 0; c < pair.angles.size(); ++c) {
        angles.field(pair.year_a).field(pair.year_b).field(c + 1).field(pair.angles[c]);
        angles.end_row();
      }
    }
  } else {
    run.warn("fewer than two distinct years; angles.csv is empty");
  }
  run.write("angles.csv", angles.str());

  const Matrix corr = correlation_matrix(ds.embedding_matrix(), run.threads);
  const auto census = count_correlated_pairs(corr, threshold);
  json clusters_json = nullptr;
  io::CsvWriter clusters({"dim", "cluster"});
  io::CsvWriter silhouette({"k", "silhouette"});
  if (D >= 3) {
    const auto k_max = std::min(k_max_cfg, D - 1);
    if (k_max < k_max_cfg) run.warn("k_max clamped to D-1 = " + std::to_string(k_max));
    const auto sweep = cluster_dimensions(corr, std::min(k_min, k_max), k_max);
    std::size_t best = 0;
    for (std::size_t i = 0; i < sweep.ks.size(); ++i) {
      silhouette.field(sweep.ks[i]).field(sweep.silhouette[i]);
      silhouette.end_row();
      if (sweep.ks[i] == sweep.best_k) best = i;
    }
    for (std::size_t d = 0; d < D; ++d) {
      clusters.field(d).field(sweep.labels[best][d]);
      clusters.end_row();
    }
    clusters_json = {{"best_k", sweep.best_k}, {"best_silhouette", sweep.best_score}};
  } else {
    run.warn("D < 3; dimension clustering skipped");
  }
  run.write("clusters.csv", clusters.str());
  run.write("silhouette.csv", silhouette.str());

  const Matrix proj = pca_project(ds, std::min<std::size_t>(3, D));
  io::CsvWriter pca3({"lat", "lon", "year", "pc1", "pc2", "pc3"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    pca3.field(ds.lat(i)).field(ds.lon(i)).field(ds.year(i));
    for (Eigen::Index c = 0; c < 3; ++c) {
      pca3.field(c < proj.cols() ? proj(static_cast<Eigen::Index>(i), c) : 0.0);
    }
    pca3.end_row();
  }
  run.write("pca3.csv", pca3.str());

  if (ds.num_covariates() > 0) {
    std::vector<std::string> header = {"dim"};
    for (const auto& n : ds.covariate_names()) header.push_back(n);
    io::CsvWriter w(header);
    const Matrix dv = dimension_variable_correlations(ds, run.threads);
    for (std::size_t d = 0; d < D; ++d) {
      w.field(d);
      for (Eigen::Index v = 0; v < dv.cols(); ++v) w.field(dv(static_cast<Eigen::Index>(d), v));
      w.end_row();
    }
    run.write("dimension_variable_spearman.csv", w.str());
  }

  json vectors = json::array();
  for (Eigen::Index c = 0; c < eig.eigenvectors.cols(); ++c) {
    const Vector v = eig.eigenvectors.col(c);
    vectors.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  const json report = {
      {"n", ds.size()},
      {"d", D},
      {"participation_ratio", eig.participation_ratio},
      {"eigenvalues", std::vector<double>(eig.eigenvalues.data(), eig.eigenvalues.data() + eig.eigenvalues.size())},
      {"variance_fraction",
       std::vector<double>(eig.variance_fraction.data(), eig.variance_fraction.data() + eig.variance_fraction.size())},
      {"eigenvectors", vectors},
      {"correlated_pairs", {{"threshold", threshold}, {"count", census.count}, {"total", census.total}}},
      {"clusters", clusters_json}};
  run.write("eigen.json", dump(report));
  return p.resolved();
}

json cmd_intrinsic_dim(Run& run, Params& p) {
  const auto ks = p.k_list("k_list", {20});
  const auto count = p.positive("probes", 10000);
  const auto band_variable = p.get<std::string>("band_variable", "elevation");
  const auto edges_cfg = p.get<std::vector<double>>("band_edges", {0.0, 500.0, 1000.0, 2000.0});
  p.finish();

  const auto ds = load(run);
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const auto probes = probe_rows(ds, count, run.sub_seed());
  const auto fields = mle_id_field(index, probes, ks, run.threads);

  io::CsvWriter summary({"k", "count", "flagged", "duplicates", "mean", "std"});
  const auto band_col = ds.covariate_index(band_variable);
  std::vector<double> edges = edges_cfg;
  edges.push_back(std::numeric_limits<double>::infinity());
  io::CsvWriter bands({"k", "band_lower", "band_upper", "count", "mean", "std"});
  for (const auto& f : fields) {
    io::CsvWriter w({"lat", "lon", "d_hat"});
    for (std::size_t i = 0; i < f.probes.size(); ++i) {
      w.field(ds.lat(f.probes[i])).field(ds.lon(f.probes[i])).field(f.estimates[i]);
      w.end_row();
    }
    run.write("id_field_k" + std::to_string(f.k) + ".csv", w.str());
    const auto& s = f.summary;
    summary.field(s.k).field(s.count).field(s.flagged).field(s.duplicates).field(s.mean).field(s.stddev);
    summary.end_row();
    if (s.flagged > 0) {
      run.warn("k=" + std::to_string(f.k) + ": " + std::to_string(s.flagged) + " probes flagged by duplicate distances");
    }
    if (band_col) {
      std::vector<double> values;
      for (auto r : f.probes) values.push_back(ds.covariate(r, *band_col));
      for (const auto& b : stratify_by_band(f, values, edges)) {
        bands.field(f.k).field(b.lower).field(b.upper).field(b.count).field(b.mean).field(b.stddev);
        bands.end_row();
      }
    }
  }
  run.write("id_summary.csv", summary.str());
  if (band_col) run.write("id_bands.csv", bands.str());
  return p.resolved();
}

void write_survey(Run& run, const EmbeddingDataset& ds, const SurveyResult& s) {
  io::CsvWriter w({"lat", "lon", "local_pr", "align_pc1", "align_pc2", "tangent_deg", "category", "var_frac_pc1"});
  for (const auto& r : s.records) {
    w.field(ds.lat(r.probe)).field(ds.lon(r.probe)).field(r.local_pr).field(r.align_pc1).field(r.align_pc2);
    w.field(r.tangent_deg).field(category_name(r.category)).field(r.var_frac_pc1);
    w.end_row();
  }
  run.write("probes_k" + std::to_string(s.summary.k) + ".csv", w.str());
  if (s.summary.degenerate > 0) {
    run.warn("k=" + std::to_string(s.summary.k) + ": " + std::to_string(s.summary.degenerate) +
             " degenerate neighborhoods");
  }
}

std::string summary_csv(const std::vector<SurveySummary>& summaries) {
  std::vector<std::string> header = {"k",          "probes",           "degenerate",        "mean_alignment",
                                     "mean_alignment_pc2", "mean_local_pr", "mean_tangent_deg", "frac_tangent_gt60",
                                     "mean_var_frac_pc1"};
  for (auto c : all_categories()) header.push_back("count_" + std::string(category_name(c)));
  io::CsvWriter w(header);
  for (const auto& s : summaries) {
    w.field(s.k).field(s.probes).field(s.degenerate).field(s.mean_alignment).field(s.mean_alignment_pc2);
    w.field(s.mean_local_pr).field(s.mean_tangent_deg).field(s.frac_tangent_gt60).field(s.mean_var_frac_pc1);
    for (auto c : all_categories()) {
      auto it = s.category_counts.find(c);
      w.field(it == s.category_counts.end() ? std::size_t{0} : it->second);
    }
    w.end_row();
  }
  return w.str();
}

json cmd_local(Run& run, Params& p, bool multiscale) {
  const auto ks = multiscale ? p.k_list("k_list", {20, 100, 500, 2000})
                             : std::vector<std::size_t>{p.positive("k", 100)};
  const auto count = p.positive("probes", 1000);
  SurveyOptions opts;
  opts.threads = run.threads;
  opts.pca.tangent_dim = p.positive("tangent_dim", 10);
  opts.pca.include_probe = p.get<bool>("include_probe", true);
  const auto draws = p.positive("baseline_draws", 100000);
  const auto dict_path = p.path("dimension_dictionary", run.base_dir);
  p.finish();

  const auto ds = load(run);
  run.dataset_hash = ds.content_hash();
  const auto dict = dict_path ? load_dimension_dictionary(*dict_path, ds.dims())
                              : DimensionDictionary::uniform(ds.dims(), Category::other);
  if (!dict_path) run.warn("no dimension dictionary; every category reported as 'other'");
  const KnnIndex index(ds);
  const auto eig = eigendecompose(covariance_matrix(ds, run.threads));
  const auto probes = probe_rows(ds, count, run.sub_seed());

  std::vector<SurveyResult> surveys;
  const auto sweep = multiscale_sweep(ds, index, probes, ks, eig, dict, opts, &surveys);
  for (const auto& s : surveys) write_survey(run, ds, s);
  for (auto k : sweep.skipped_k) run.warn("k=" + std::to_string(k) + " skipped: not enough rows");
  run.write("multiscale_summary.csv", summary_csv(sweep.summaries));

  const json baseline = {{"D", ds.dims()},
                         {"analytic", analytic_alignment_baseline(ds.dims())},
                         {"monte_carlo", random_alignment_baseline(ds.dims(), draws, run.sub_seed() + 1)},
                         {"draws", draws}};
  run.write("alignment_baseline.json", dump(baseline));
  return p.resolved();
}

json probe_model_json(const ProbeModel& m) {
  return {{"property", m.property},
          {"scale", probe_scale_name(m.scale)},
          {"scope", m.scope},
          {"r2", m.r2},
          {"count", m.count},
          {"intercept", m.intercept},
          {"zero_direction", m.zero_direction},
          {"direction", std::vector<double>(m.direction.data(), m.direction.data() + m.direction.size())},
          {"coefficients",
           std::vector<double>(m.coefficients.data(), m.coefficients.data() + m.coefficients.size())}};
}

json cmd_probes(Run& run, Params& p) {
  ProbeSuiteOptions opts;
  opts.alpha = p.get<double>("alpha", 1.0);
  opts.k = p.positive("k", 100);
  opts.global_sample = p.positive("global_sample", 50000);
  const auto count = p.positive("sources", 500);
  opts.seed = run.sub_seed();
  opts.threads = run.threads;
  const auto ds = load(run);
  const auto props = property_list(p, ds);
  const auto regions = region_list(p, run);
  p.finish();
  run.dataset_hash = ds.content_hash();

  const KnnIndex index(ds);
  const auto sources = probe_rows(ds, count, run.sub_seed() + 1);
  const auto suite = fit_probe_suite(ds, index, props, regions, sources, opts);

  json models = json::array();
  std::size_t zero = 0;
  for (const auto& m : suite.models) {
    models.push_back(probe_model_json(m));
    zero += m.zero_direction;
  }
  if (zero > 0) run.warn(std::to_string(zero) + " probes had a constant target and a zero direction");
  run.write("probe_models.json", dump({{"models", models}}));

  io::CsvWriter w({"property", "comparison", "count", "mean_abs_cos", "median_abs_cos", "excluded_zero"});
  io::CsvWriter raw({"property", "comparison", "abs_cos"});
  for (const auto& s : suite.stability) {
    const std::vector<std::pair<const char*, const CosineStats*>> rows = {{"local_vs_global", &s.local_global},
                                                                           {"regional_vs_global", &s.regional_global},
                                                                           {"local_vs_regional", &s.local_regional},
                                                                           {"local_pairwise", &s.local_pairwise}};
    for (const auto& [name, st] : rows) {
      w.field(s.property).field(name).field(st->count).field(st->mean).field(st->median).field(s.excluded_zero);
      w.end_row();
    }
    const std::vector<std::pair<const char*, const std::vector<double>*>> values = {
        {"local_vs_global", &s.local_vs_global},
        {"regional_vs_global", &s.regional_vs_global},
        {"local_vs_regional", &s.local_vs_regional}};
    for (const auto& [name, vs] : values) {
      for (double v : *vs) {
        raw.field(s.property).field(name).field(v);
        raw.end_row();
      }
    }
  }
  run.write("direction_stability.csv", w.str());
  run.write("probe_cosines.csv", raw.str());
  return p.resolved();
}

CompositionOptions composition_options(Run& run, Params& p) {
  CompositionOptions o;
  o.k = p.positive("k", 100);
  o.top_p = p.positive("top_p", 10);
  o.tangent_dim = p.positive("tangent_dim", 10);
  o.global_sample = p.positive("global_sample", 50000);
  o.alpha = p.get<double>("alpha", 1.0);
  o.seed = run.sub_seed();
  o.threads = run.threads;
  return o;
}

json cmd_shift(Run& run, Params& p) {
  auto opts = composition_options(run, p);
  const auto count = p.positive("sources", 500);
  const auto method_names = p.get<std::vector<std::string>>("methods", [] {
    std::vector<std::string> all;
    for (auto m : all_shift_methods()) all.emplace_back(shift_method_name(m));
    return all;
  }());
  const auto magnitudes = p.get<std::vector<double>>("magnitudes", {0.5, 1.0, 1.5, 2.0});
  const auto ds = load(run);
  const auto props = property_list(p, ds);
  const auto regions = region_list(p, run);
  p.finish();
  std::vector<ShiftMethod> methods;
  for (const auto& m : method_names) {
    try {
      methods.push_back(parse_shift_method(m));
    } catch (const Error&) {
      throw ConfigError("config key 'shift.methods': unknown method '" + m + "'");
    }
  }
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const CompositionLab lab(ds, index, props, regions, opts);
  const auto sources = probe_rows(ds, count, run.sub_seed() + 1);
  const auto suite = experiment_suite(lab, sources, props, methods, magnitudes);

  io::CsvWriter w({"source_lat", "source_lon", "property", "method", "magnitude", "retrieved_lat", "retrieved_lon",
                   "target_change", "target_change_local", "non_target_deviation", "sigma_dir", "failed", "error"});
  std::size_t failed = 0;
  for (const auto& o : suite.outcomes) {
    write_coords(w, ds, o.source);
    w.field(o.property).field(shift_method_name(o.method)).field(o.magnitude);
    write_coords(w, ds, o.retrieved);
    w.field(o.target_change).field(o.target_change_local).field(o.non_target_deviation).field(o.sigma_dir);
    w.field(o.failed ? "true" : "false").field(o.error);
    w.end_row();
    failed += o.failed;
  }
  if (failed > 0) run.warn(std::to_string(failed) + " shift outcomes failed");
  run.write("shift_outcomes.csv", w.str());

  io::CsvWriter a({"method", "magnitude", "count", "failures", "mean_target_change", "mean_abs_target_change",
                   "mean_target_change_local", "mean_non_target", "precision"});
  for (const auto& g : suite.aggregates) {
    a.field(shift_method_name(g.method)).field(g.magnitude).field(g.count).field(g.failures);
    a.field(g.mean_target_change).field(g.mean_abs_target_change).field(g.mean_target_change_local);
    a.field(g.mean_non_target).field(g.precision);
    a.end_row();
  }
  run.write("shift_summary.csv", a.str());
  return p.resolved();
}

// Distinct random rows, `width` per tuple.
std::vector<std::vector<std::size_t>> random_tuples(std::size_t n, std::size_t count, std::size_t width,
                                                    std::uint64_t seed) {
  if (n < width) throw DataError("dataset has fewer rows than a tuple needs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::vector<std::size_t>> out(count);
  for (auto& t : out) {
    while (t.size() < width) {
      const std::size_t r = pick(rng);
      if (std::find(t.begin(), t.end(), r) == t.end()) t.push_back(r);
    }
  }
  return out;
}

json cmd_transfer(Run& run, Params& p) {
  auto opts = composition_options(run, p);
  opts.transfer_components = p.positive("components", 3);
  const auto count = p.positive("pairs", 100);
  const auto ds = load(run);
  const auto props = property_list(p, ds);
  p.finish();
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const CompositionLab lab(ds, index, props, {}, opts);
  const auto pairs = random_tuples(ds.size(), count, 2, run.sub_seed() + 1);

  std::vector<TransferOutcome> results(pairs.size() * props.size());
  parallel_for(pairs.size(), run.threads, [&](std::size_t i) {
    for (std::size_t q = 0; q < props.size(); ++q) {
      results[i * props.size() + q] = lab.property_transfer(pairs[i][0], pairs[i][1], props[q]);
    }
  });
  io::CsvWriter w({"a_lat", "a_lon", "b_lat", "b_lon", "property", "components", "retrieved_lat", "retrieved_lon",
                   "target_error", "non_target_deviation", "failed", "error"});
  std::size_t failed = 0;
  for (const auto& o : results) {
    write_coords(w, ds, o.a);
    write_coords(w, ds, o.b);
    w.field(o.property).field(join_indices(o.components));
    write_coords(w, ds, o.retrieved);
    w.field(o.target_error).field(o.non_target_deviation).field(o.failed ? "true" : "false").field(o.error);
    w.end_row();
    failed += o.failed;
  }
  if (failed > 0) run.warn(std::to_string(failed) + " transfers failed");
  run.write("transfer_outcomes.csv", w.str());
  return p.resolved();
}

json cmd_analogy(Run& run, Params& p) {
  auto opts = composition_options(run, p);
  opts.analogy_sign = p.get<int>("sign", 1);
  if (opts.analogy_sign != 1 && opts.analogy_sign != -1) throw ConfigError("config key 'analogy.sign' must be 1 or -1");
  const auto count = p.positive("triples", 100);
  const auto mode_names = p.get<std::vector<std::string>>("modes", {"naive", "tangent_projected"});
  const auto ds = load(run);
  const auto props = property_list(p, ds);
  p.finish();
  std::vector<AnalogyMode> modes;
  for (const auto& m : mode_names) {
    try {
      modes.push_back(parse_analogy_mode(m));
    } catch (const Error&) {
      throw ConfigError("config key 'analogy.modes': unknown mode '" + m + "'");
    }
  }
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const CompositionLab lab(ds, index, props, {}, opts);
  const auto triples = random_tuples(ds.size(), count, 3, run.sub_seed() + 1);

  const std::size_t per = props.size() * modes.size();
  std::vector<AnalogyOutcome> results(triples.size() * per);
  parallel_for(triples.size(), run.threads, [&](std::size_t i) {
    const auto& t = triples[i];
    for (std::size_t q = 0; q < props.size(); ++q) {
      for (std::size_t m = 0; m < modes.size(); ++m) {
        results[i * per + q * modes.size() + m] = lab.analogy(t[0], t[1], t[2], props[q], modes[m]);
      }
    }
  });
  io::CsvWriter w({"a_lat", "a_lon", "b_lat", "b_lon", "c_lat", "c_lon", "property", "mode", "retrieved_lat",
                   "retrieved_lon", "target_error", "non_target_deviation", "failed", "error"});
  std::size_t failed = 0;
  for (const auto& o : results) {
    write_coords(w, ds, o.a);
    write_coords(w, ds, o.b);
    write_coords(w, ds, o.c);
    w.field(o.property).field(analogy_mode_name(o.mode));
    write_coords(w, ds, o.retrieved);
    w.field(o.target_error).field(o.non_target_deviation).field(o.failed ? "true" : "false").field(o.error);
    w.end_row();
    failed += o.failed;
  }
  if (failed > 0) run.warn(std::to_string(failed) + " analogies failed");
  run.write("analogy_outcomes.csv", w.str());
  return p.resolved();
}

CoherenceOptions coherence_options(Run& run, Params& p, const EmbeddingDataset& ds) {
  CoherenceOptions o;
  o.k = p.positive("coherence_k", 10);
  o.mode = spread_mode(p.get<std::string>("spread", "zscore_std"), p.name("spread"));
  o.variables = p.get<std::vector<std::string>>("variables", {});
  for (const auto& v : o.variables) ds.require_covariate(v);
  o.threads = run.threads;
  return o;
}

json cmd_coherence(Run& run, Params& p) {
  const auto count = p.positive("probes", 10000);
  const auto ds = load(run);
  const auto opts = coherence_options(run, p, ds);
  p.finish();
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const auto rows = probe_rows(ds, count, run.sub_seed());
  const auto scores = retrieval_coherence(ds, index, rows, opts);
  const auto vars = coherence_variables(ds, opts);

  std::vector<std::string> header = {"lat", "lon", "coherence"};
  for (const auto& v : vars) header.push_back("spread_" + v);
  io::CsvWriter w(header);
  std::vector<double> totals(vars.size(), 0.0);
  for (const auto& s : scores) {
    w.field(ds.lat(s.row)).field(ds.lon(s.row)).field(s.mean);
    for (std::size_t v = 0; v < s.spreads.size(); ++v) {
      w.field(s.spreads[v]);
      totals[v] += s.spreads[v];
    }
    w.end_row();
  }
  run.write("coherence.csv", w.str());
  io::CsvWriter sum({"variable", "mean_spread"});
  for (std::size_t v = 0; v < vars.size(); ++v) {
    sum.field(vars[v]).field(scores.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : totals[v] / static_cast<double>(scores.size()));
    sum.end_row();
  }
  run.write("coherence_summary.csv", sum.str());
  return p.resolved();
}

FeatureConfig feature_config(Params& p) {
  FeatureConfig c;
  c.id_k = p.positive("id_k", 20);
  c.pr_k = p.positive("pr_k", 100);
  c.distance_k = p.positive("distance_k", 10);
  c.tangent_dim = p.positive("tangent_dim", 10);
  return c;
}

struct ConfidenceFit {
  std::vector<std::size_t> rows;
  std::vector<RowGeometry> geometry;
  std::vector<CoherenceScore> coherence;
  std::vector<std::size_t> used;  // positions into rows with complete features
  ConfidenceModel model;
};

ConfidenceFit fit_confidence(Run& run, const EmbeddingDataset& ds, const KnnIndex& index, FeatureConfig& fc,
                             const CoherenceOptions& copts, std::size_t count, double holdout) {
  const auto eig = eigendecompose(covariance_matrix(ds, run.threads));
  fc.global_pc1 = eig.eigenvectors.col(0);
  ConfidenceFit fit;
  fit.rows = probe_rows(ds, count, run.sub_seed());
  const FeatureExtractor extractor(ds, index, fc);
  fit.geometry = extractor.compute_rows(fit.rows, run.threads);
  fit.coherence = retrieval_coherence(ds, index, fit.rows, copts);
  for (std::size_t i = 0; i < fit.rows.size(); ++i) {
    if (fit.geometry[i].complete()) fit.used.push_back(i);
  }
  if (fit.used.size() < fit.rows.size()) {
    run.warn(std::to_string(fit.rows.size() - fit.used.size()) + " probes with incomplete features left out of the fit");
  }
  Matrix x(static_cast<Eigen::Index>(fit.used.size()), 5);
  Vector y(static_cast<Eigen::Index>(fit.used.size()));
  for (std::size_t r = 0; r < fit.used.size(); ++r) {
    const auto i = fit.used[r];
    x.row(static_cast<Eigen::Index>(r)) = fit.geometry[i].feature_vector().transpose();
    y[static_cast<Eigen::Index>(r)] = fit.coherence[i].mean;
  }
  fit.model = fit_confidence_model(x, y, holdout, run.sub_seed() + 1);
  if (fit.model.rank_deficient) run.warn("confidence model design matrix is rank deficient");
  return fit;
}

void write_features(Run& run, const EmbeddingDataset& ds, const ConfidenceFit& fit) {
  std::vector<std::string> header = {"lat", "lon"};
  for (auto n : kFeatureNames) header.emplace_back(n);
  header.insert(header.end(), {"coherence", "predicted"});
  io::CsvWriter w(header);
  for (std::size_t i = 0; i < fit.rows.size(); ++i) {
    const auto& g = fit.geometry[i];
    w.field(ds.lat(fit.rows[i])).field(ds.lon(fit.rows[i]));
    for (std::size_t f = 0; f < 5; ++f) w.field(g.valid[f] ? g.features[f] : std::numeric_limits<double>::quiet_NaN());
    w.field(fit.coherence[i].mean);
    w.field(g.complete() ? fit.model.predict(g.feature_vector()) : std::numeric_limits<double>::quiet_NaN());
    w.end_row();
  }
  run.write("confidence_features.csv", w.str());
}

json cmd_confidence(Run& run, Params& p) {
  const auto count = p.positive("probes", 5000);
  const double holdout = p.get<double>("holdout", 0.2);
  auto fc = feature_config(p);
  const auto ds = load(run);
  const auto copts = coherence_options(run, p, ds);
  p.finish();
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const auto fit = fit_confidence(run, ds, index, fc, copts, count, holdout);
  run.write("confidence_model.json", dump(fit.model.to_json()));
  write_features(run, ds, fit);
  return p.resolved();
}

json cmd_dictionary(Run& run, Params& p) {
  const auto count = p.positive("probes", 5000);
  const double holdout = p.get<double>("holdout", 0.2);
  auto fc = feature_config(p);
  const auto ds = load(run);
  const auto copts = coherence_options(run, p, ds);
  const auto regions = region_list(p, run);
  p.finish();
  if (regions.empty()) throw ConfigError("config key 'dictionary.regions' is required");
  run.dataset_hash = ds.content_hash();
  const KnnIndex index(ds);
  const auto fit = fit_confidence(run, ds, index, fc, copts, count, holdout);

  std::vector<ProbeProfile> profiles(fit.rows.size());
  for (std::size_t i = 0; i < fit.rows.size(); ++i) {
    auto& pp = profiles[i];
    const auto& g = fit.geometry[i];
    pp.row = fit.rows[i];
    pp.coherence = fit.coherence[i].mean;
    pp.local_id = g.valid[0] ? g.features[0] : std::numeric_limits<double>::quiet_NaN();
    pp.pc1 = g.pc1;
    pp.features = g.features;
    pp.features_valid = g.complete();
  }
  auto regional = regional_profiles(ds, profiles, regions);
  auto importance = dimension_importance(ds, profiles, regions);
  for (const auto& r : regional) {
    if (r.count == 0) run.warn("region '" + r.name + "' holds no probes");
  }
  const json provenance = {{"dataset_hash", run.dataset_hash},
                           {"seed", run.seed},
                           {"probes", fit.rows.size()},
                           {"coherence", {{"k", copts.k},
                                          {"spread", copts.mode == SpreadMode::zscore_std ? "zscore_std" : "raw_cv"},
                                          {"variables", coherence_variables(ds, copts)}}},
                           {"feature_config", fc.to_json()}};
  const auto dict = build_geometric_dictionary(regional, fit.model, importance, regions, provenance);
  run.write("geometric_dictionary.json", dump(dict.to_json()));

  io::CsvWriter rp({"region", "count", "mean_coherence", "mean_local_id", "top_dims", "top_dim_fractions"});
  for (const auto& r : dict.regions) {
    std::vector<std::size_t> dims;
    std::string fracs;
    for (const auto& d : r.top_dims) {
      dims.push_back(d.dim);
      fracs += (fracs.empty() ? "" : ";") + io::format_double(d.fraction);
    }
    rp.field(r.name).field(r.count).field(r.mean_coherence).field(r.mean_local_id).field(join_indices(dims)).field(fracs);
    rp.end_row();
  }
  run.write("regional_profiles.csv", rp.str());
  std::vector<std::string> header = {"dim", "global_fraction"};
  for (const auto& r : regions) header.push_back(r.name);
  io::CsvWriter di(header);
  for (const auto& d : dict.dimension_importance) {
    di.field(d.dim).field(d.global_fraction);
    for (double f : d.region_fraction) di.field(f);
    di.end_row();
  }
  run.write("dimension_importance.csv", di.str());
  write_features(run, ds, fit);
  json params = p.resolved();
  params["dictionary_hash"] = dict.hash();
  return params;
}

int cmd_serve(Run& run) {
  if (!run.config.contains("serve")) throw ConfigError("config key 'serve' is required for the serve subcommand");
  auto cfg = ServerConfig::from_json(run.config.at("serve"), run.base_dir);
  if (run.dataset_path && !run.config.at("serve").contains("dataset")) cfg.dataset = *run.dataset_path;
  return serve(cfg);
}

// ---------------------------------------------------------------------------

int execute(Run& run) {
  static const std::set<std::string> top_keys = [] {
    std::set<std::string> k = {"dataset", "out", "seed", "threads"};
    for (const auto& [name, help] : kSubcommands) k.insert(name);
    return k;
  }();
  for (const auto& [key, value] : run.config.items()) {
    if (!top_keys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (run.subcommand == "serve") return cmd_serve(run);

  fs::create_directories(run.out);
  Params p(run.config.contains(run.subcommand) ? run.config.at(run.subcommand) : json::object(), run.subcommand);
  static const std::map<std::string, std::function<json(Run&, Params&)>> table = {
      {"synth", cmd_synth},
      {"ingest", cmd_ingest},
      {"global-geometry", cmd_global_geometry},
      {"intrinsic-dim", cmd_intrinsic_dim},
      {"local-geometry", [](Run& r, Params& q) { return cmd_local(r, q, false); }},
      {"multiscale", [](Run& r, Params& q) { return cmd_local(r, q, true); }},
      {"probes", cmd_probes},
      {"shift", cmd_shift},
      {"transfer", cmd_transfer},
      {"analogy", cmd_analogy},
      {"coherence", cmd_coherence},
      {"confidence", cmd_confidence},
      {"dictionary", cmd_dictionary},
  };
  const json params = table.at(run.subcommand)(run, p);

  const json manifest = {{"subcommand", run.subcommand},
                         {"seed", run.seed},
                         {"sub_seed", run.sub_seed()},
                         {"dataset_hash", run.dataset_hash},
                         {"parameters", params},
                         {"outputs", run.outputs},
                         {"warnings", run.warnings}};
  io::write_file_atomic(run.out / "manifest.json", dump(manifest));
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-space geometry toolkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> dataset, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--dataset", dataset, "dataset path (directory = binary, file = CSV)");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  for (const auto& [name, help] : kSubcommands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (e.get_exit_code() == 0) return code;
    if (std::string(e.get_name()) != "CallForHelp") std::cerr << app.help();
    return 1;
  }

  Run run;
  run.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      try {
        run.config = json::parse(io::read_file(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + config_path + ": " + e.what());
      }
      if (!run.config.is_object()) throw ConfigError("config root must be a JSON object");
      run.base_dir = fs::path(config_path).parent_path();
      if (run.base_dir.empty()) run.base_dir = ".";
    }
    auto top = [&](const char* key) -> const json* {
      return run.config.contains(key) ? &run.config.at(key) : nullptr;
    };
    try {
      if (auto* v = top("dataset")) run.dataset_path = run.base_dir / v->get<std::string>();
      if (auto* v = top("out")) run.out = run.base_dir / v->get<std::string>();
      if (auto* v = top("seed")) run.seed = v->get<std::uint64_t>();
      if (auto* v = top("threads")) run.threads = v->get<int>();
    } catch (const json::exception&) {
      throw ConfigError("config keys dataset/out must be strings and seed/threads non-negative integers");
    }
    if (dataset) run.dataset_path = *dataset;
    if (out) run.out = *out;
    if (seed) run.seed = *seed;
    if (threads) run.threads = *threads;
    if (run.threads < 1) throw ConfigError("config key 'threads' must be >= 1");
    return execute(run);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
