#include "embgeo/synth.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <set>

namespace embgeo {

using nlohmann::json;

std::string_view manifold_kind_name(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::flat_subspace: return "flat_subspace";
    case ManifoldKind::swiss_roll: return "swiss_roll";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::heterogeneous_patchwork: return "heterogeneous_patchwork";
  }
  return "flat_subspace";
}

ManifoldKind parse_manifold_kind(std::string_view name) {
  for (auto k : {ManifoldKind::flat_subspace, ManifoldKind::swiss_roll, ManifoldKind::sphere,
                 ManifoldKind::heterogeneous_patchwork}) {
    if (manifold_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown manifold kind '" + std::string(name) + "'");
}

void ManifoldSpec::validate() const {
  if (D < 1) throw ConfigError("ambient dimension D must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("noise std must be >= 0");
  if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
  if (!(center_spread >= 0.0)) throw ConfigError("center_spread must be >= 0");
  switch (kind) {
    case ManifoldKind::flat_subspace:
      if (d < 1 || d > D) throw ConfigError("flat_subspace needs 1 <= d <= D");
      if (!axis_scales.empty() && axis_scales.size() != d) {
        throw ConfigError("axis_scales must have d entries");
      }
      for (double s : axis_scales) {
        if (!(s > 0.0)) throw ConfigError("axis_scales must be positive");
      }
      break;
    case ManifoldKind::swiss_roll:
      if (d != 2) throw ConfigError("swiss_roll is a 2-manifold; set d = 2");
      if (D < 3) throw ConfigError("swiss_roll needs D >= 3");
      break;
    case ManifoldKind::sphere:
      if (d < 1 || d + 1 > D) throw ConfigError("sphere S^d needs 1 <= d and d + 1 <= D");
      break;
    case ManifoldKind::heterogeneous_patchwork: {
      if (patches.empty()) throw ConfigError("patchwork needs at least one patch");
      double total = 0.0;
      for (const auto& p : patches) {
        if (p.dim < 1 || p.dim > D) throw ConfigError("patch dim must be in [1, D]");
        if (!(p.weight > 0.0)) throw ConfigError("patch weights must be positive");
        total += p.weight;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError("patch weights must sum to 1");
      break;
    }
  }
  std::size_t min_n = d + 1;
  if (kind == ManifoldKind::heterogeneous_patchwork) {
    min_n = 0;
    for (const auto& p : patches) min_n = std::max(min_n, p.dim + 1);
  }
  if (n < min_n) throw ConfigError("N must be at least d + 1 = " + std::to_string(min_n));
}

Matrix random_orthonormal_frame(std::size_t D, std::size_t m, std::mt19937_64& rng) {
  if (m > D) throw ConfigError("frame width exceeds ambient dimension");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(D, m);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < D; ++r) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(D, m);
  // Fix signs so Q R has positive diagonal in R (Haar measure).
  const Matrix& r = qr.matrixQR();
  for (std::size_t c = 0; c < m; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  return q;
}

std::pair<double, double> grid_coordinate(std::size_t i, std::size_t n) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  if (side <= 1) return {0.0, 0.0};
  const double step = 1.0 / static_cast<double>(side - 1);
  const double lon = static_cast<double>(i / side) * step;
  const double lat = static_cast<double>(i % side) * step;
  return {lat, lon};
}

Vector ManifoldOracle::clean_point(std::size_t row) const {
  const std::size_t p = patch_of_row.at(row);
  const std::size_t m = patch_dims[p];
  switch (spec.kind) {
    case ManifoldKind::swiss_roll: {
      const double t = latent(row, 0);
      const double h = latent(row, 1);
      Vector host(3);
      host << t * std::cos(t), h, t * std::sin(t);
      return frames[0] * host;
    }
    case ManifoldKind::sphere:
      return frames[0] * latent.row(row).head(spec.d + 1).transpose();
    case ManifoldKind::flat_subspace: {
      Vector local(m);
      for (std::size_t a = 0; a < m; ++a) {
        const double s = spec.axis_scales.empty() ? spec.scale : spec.axis_scales[a];
        local[a] = s * (latent(row, a) - 0.5);
      }
      return frames[0] * local;
    }
    case ManifoldKind::heterogeneous_patchwork: {
      Vector local = spec.scale * (latent.row(row).head(m).transpose().array() - 0.5).matrix();
      return centers[p] + frames[p] * local;
    }
  }
  return {};
}

const Matrix& ManifoldOracle::tangent_frame(std::size_t row) const {
  if (spec.kind != ManifoldKind::flat_subspace && spec.kind != ManifoldKind::heterogeneous_patchwork) {
    throw DataError("exact tangent frames are only stored for flat kinds");
  }
  return frames[patch_of_row.at(row)];
}

std::vector<PatchSpec> equal_patches(std::size_t count, const std::vector<std::size_t>& dims) {
  if (count == 0 || dims.empty()) throw ConfigError("equal_patches needs count > 0 and dims");
  std::vector<PatchSpec> out(count);
  for (std::size_t p = 0; p < count; ++p) {
    out[p].dim = dims[p % dims.size()];
    out[p].weight = 1.0 / static_cast<double>(count);
  }
  return out;
}

SynthResult generate_manifold(const ManifoldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  ManifoldOracle oracle;
  oracle.spec = spec;
  const std::size_t n = spec.n;
  const std::size_t D = spec.D;

  std::size_t latent_width = spec.d;
  switch (spec.kind) {
    case ManifoldKind::flat_subspace:
      oracle.frames.push_back(random_orthonormal_frame(D, spec.d, rng));
      oracle.centers.push_back(Vector::Zero(D));
      oracle.patch_dims.push_back(spec.d);
      break;
    case ManifoldKind::swiss_roll:
      oracle.frames.push_back(random_orthonormal_frame(D, 3, rng));
      oracle.centers.push_back(Vector::Zero(D));
      oracle.patch_dims.push_back(2);
      break;
    case ManifoldKind::sphere:
      oracle.frames.push_back(random_orthonormal_frame(D, spec.d + 1, rng));
      oracle.centers.push_back(Vector::Zero(D));
      oracle.patch_dims.push_back(spec.d);
      latent_width = spec.d + 1;
      break;
    case ManifoldKind::heterogeneous_patchwork:
      latent_width = 0;
      for (const auto& p : spec.patches) {
        oracle.frames.push_back(random_orthonormal_frame(D, p.dim, rng));
        Vector c(D);
        for (std::size_t j = 0; j < D; ++j) c[j] = spec.center_spread * normal(rng);
        oracle.centers.push_back(std::move(c));
        oracle.patch_dims.push_back(p.dim);
        latent_width = std::max(latent_width, p.dim);
      }
      break;
  }

  // Patches own contiguous row ranges; rows are lon-major on the grid, so
  // each patch is a vertical strip of the unit square.
  oracle.patch_of_row.assign(n, 0);
  if (spec.kind == ManifoldKind::heterogeneous_patchwork) {
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t p = 0; p < spec.patches.size(); ++p) {
      cum += spec.patches[p].weight;
      std::size_t end = p + 1 == spec.patches.size()
                            ? n
                            : std::min(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
      for (std::size_t i = begin; i < end; ++i) oracle.patch_of_row[i] = p;
      begin = std::max(begin, end);
    }
  }

  oracle.latent = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(latent_width));
  std::vector<float> vectors(n * D);
  std::vector<double> lat(n), lon(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = oracle.patch_of_row[i];
    switch (spec.kind) {
      case ManifoldKind::flat_subspace:
      case ManifoldKind::heterogeneous_patchwork:
        for (std::size_t a = 0; a < oracle.patch_dims[p]; ++a) oracle.latent(i, a) = unif(rng);
        break;
      case ManifoldKind::swiss_roll:
        oracle.latent(i, 0) = 1.5 * std::numbers::pi * (1.0 + 2.0 * unif(rng));
        oracle.latent(i, 1) = 21.0 * unif(rng);
        break;
      case ManifoldKind::sphere: {
        Vector z(spec.d + 1);
        double norm = 0.0;
        do {
          for (std::size_t a = 0; a <= spec.d; ++a) z[a] = normal(rng);
          norm = z.norm();
        } while (norm < 1e-12);
        oracle.latent.row(i) = (spec.scale / norm) * z.transpose();
        break;
      }
    }
    Vector x = oracle.clean_point(i);
    if (spec.noise > 0.0) {
      for (std::size_t j = 0; j < D; ++j) x[j] += spec.noise * normal(rng);
    }
    for (std::size_t j = 0; j < D; ++j) vectors[i * D + j] = static_cast<float>(x[j]);
    std::tie(lat[i], lon[i]) = grid_coordinate(i, n);
  }

  EmbeddingDataset ds(D, std::move(vectors), std::move(lat), std::move(lon),
                      std::vector<int>(n, spec.year), {}, {});
  return {std::move(ds), std::move(oracle)};
}

namespace {

void check_new_names(const EmbeddingDataset& ds, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    if (ds.covariate_index(name)) throw ConfigError("covariate '" + name + "' already exists");
  }
}

}  // namespace

SynthResult attach_planted_properties(SynthResult base, const std::vector<Vector>& directions,
                                      double noise, std::uint64_t seed,
                                      std::vector<std::string> names) {
  const auto& ds = base.dataset;
  if (names.empty()) {
    for (std::size_t j = 0; j < directions.size(); ++j) names.push_back("planted_" + std::to_string(j));
  }
  if (names.size() != directions.size()) throw ConfigError("one name per planted direction");
  if (!(noise >= 0.0)) throw ConfigError("noise std must be >= 0");
  check_new_names(ds, names);
  for (const auto& u : directions) {
    if (static_cast<std::size_t>(u.size()) != ds.dims()) throw ConfigError("planted direction has wrong length");
    if (std::abs(u.norm() - 1.0) > 1e-9) throw ConfigError("planted directions must be unit-norm");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> columns(directions.size(), std::vector<double>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.row(i);
    for (std::size_t p = 0; p < directions.size(); ++p) {
      double y = 0.0;
      for (std::size_t j = 0; j < ds.dims(); ++j) y += static_cast<double>(row[j]) * directions[p][j];
      if (noise > 0.0) y += noise * normal(rng);
      columns[p][i] = y;
    }
  }
  base.dataset = ds.with_covariates(names, columns);
  base.oracle.planted_names.insert(base.oracle.planted_names.end(), names.begin(), names.end());
  base.oracle.planted_directions.insert(base.oracle.planted_directions.end(), directions.begin(),
                                        directions.end());
  return base;
}

SynthResult attach_patch_properties(SynthResult base, std::size_t count, double noise,
                                    std::uint64_t seed, std::vector<std::string> names) {
  if (base.oracle.spec.kind != ManifoldKind::heterogeneous_patchwork) {
    throw ConfigError("patch properties need a heterogeneous_patchwork dataset");
  }
  if (names.empty()) {
    for (std::size_t j = 0; j < count; ++j) names.push_back("patch_prop_" + std::to_string(j));
  }
  if (names.size() != count) throw ConfigError("one name per patch property");
  const auto& ds = base.dataset;
  check_new_names(ds, names);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& oracle = base.oracle;
  std::vector<std::vector<Vector>> dirs(count);
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t p = 0; p < oracle.frames.size(); ++p) {
      Vector coeff(oracle.patch_dims[p]);
      for (auto& v : coeff) v = normal(rng);
      coeff.normalize();
      dirs[c].push_back(oracle.frames[p] * coeff);
    }
  }
  std::vector<std::vector<double>> columns(count, std::vector<double>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t p = oracle.patch_of_row[i];
    const auto row = ds.row(i);
    for (std::size_t c = 0; c < count; ++c) {
      double y = 0.0;
      for (std::size_t j = 0; j < ds.dims(); ++j) {
        y += (static_cast<double>(row[j]) - oracle.centers[p][j]) * dirs[c][p][j];
      }
      if (noise > 0.0) y += noise * normal(rng);
      columns[c][i] = y;
    }
  }
  base.dataset = ds.with_covariates(names, columns);
  base.oracle.patch_property_names.insert(base.oracle.patch_property_names.end(), names.begin(),
                                          names.end());
  for (auto& d : dirs) base.oracle.patch_directions.push_back(std::move(d));
  return base;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

json manifold_spec_to_json(const ManifoldSpec& spec) {
  json patches = json::array();
  for (const auto& p : spec.patches) patches.push_back({{"dim", p.dim}, {"weight", p.weight}});
  return {{"kind", manifold_kind_name(spec.kind)},
          {"d", spec.d},
          {"D", spec.D},
          {"n", spec.n},
          {"noise", spec.noise},
          {"seed", spec.seed},
          {"patches", patches},
          {"axis_scales", spec.axis_scales},
          {"scale", spec.scale},
          {"center_spread", spec.center_spread},
          {"year", spec.year}};
}

ManifoldSpec manifold_spec_from_json(const json& j) {
  static const std::set<std::string> known = {"kind",  "d",     "D",           "n",
                                              "noise", "seed",  "patches",     "axis_scales",
                                              "scale", "center_spread", "year"};
  if (!j.is_object()) throw ConfigError("manifold spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown manifold spec key '" + key + "'");
  }
  ManifoldSpec spec;
  try {
    if (j.contains("kind")) spec.kind = parse_manifold_kind(j.at("kind").get<std::string>());
    if (j.contains("d")) spec.d = j.at("d").get<std::size_t>();
    if (j.contains("D")) spec.D = j.at("D").get<std::size_t>();
    if (j.contains("n")) spec.n = j.at("n").get<std::size_t>();
    if (j.contains("noise")) spec.noise = j.at("noise").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("axis_scales")) spec.axis_scales = j.at("axis_scales").get<std::vector<double>>();
    if (j.contains("scale")) spec.scale = j.at("scale").get<double>();
    if (j.contains("center_spread")) spec.center_spread = j.at("center_spread").get<double>();
    if (j.contains("year")) spec.year = j.at("year").get<int>();
    if (j.contains("patches")) {
      // Weights are all given or all omitted (equal shares).
      const auto& list = j.at("patches");
      std::size_t weighted = 0;
      for (const auto& p : list) {
        weighted += p.contains("weight");
        const double w = p.contains("weight") ? p.at("weight").get<double>() : 1.0 / static_cast<double>(list.size());
        spec.patches.push_back({p.at("dim").get<std::size_t>(), w});
      }
      if (weighted != 0 && weighted != list.size()) {
        throw ConfigError("manifold spec: give a weight for every patch or for none");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("invalid manifold spec: " + std::string(e.what()));
  }
  return spec;
}

json oracle_to_json(const ManifoldOracle& oracle, bool include_latent) {
  json frames = json::array();
  for (const auto& f : oracle.frames) frames.push_back(matrix_json(f));
  json centers = json::array();
  for (const auto& c : oracle.centers) centers.push_back(vector_json(c));
  json planted = json::array();
  for (std::size_t p = 0; p < oracle.planted_directions.size(); ++p) {
    planted.push_back({{"name", oracle.planted_names[p]},
                       {"direction", vector_json(oracle.planted_directions[p])}});
  }
  json patch_props = json::array();
  for (std::size_t c = 0; c < oracle.patch_directions.size(); ++c) {
    json dirs = json::array();
    for (const auto& d : oracle.patch_directions[c]) dirs.push_back(vector_json(d));
    patch_props.push_back({{"name", oracle.patch_property_names[c]}, {"directions", dirs}});
  }
  json out = {{"spec", manifold_spec_to_json(oracle.spec)},
              {"frames", frames},
              {"centers", centers},
              {"patch_dims", oracle.patch_dims},
              {"planted", planted},
              {"patch_properties", patch_props}};
  if (include_latent) {
    out["patch_of_row"] = oracle.patch_of_row;
    out["generating_coords"] = matrix_json(oracle.latent);
  }
  return out;
}

}  // namespace embgeo
