// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "embgeo/composition.hpp"
#include "embgeo/io.hpp"
#include "embgeo/spectral.hpp"

#include "server_fixture.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

using namespace embgeo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ManifoldSpec flat(std::size_t d, std::size_t D, std::size_t n, std::uint64_t seed) {
  ManifoldSpec s;
  s.kind = ManifoldKind::flat_subspace;
  s.d = d;
  s.D = D;
  s.n = n;
  s.seed = seed;
  return s;
}

ManifoldSpec patchwork(std::size_t D, std::size_t n, std::size_t count, std::vector<std::size_t> dims,
                       std::uint64_t seed) {
  ManifoldSpec s;
  s.kind = ManifoldKind::heterogeneous_patchwork;
  s.D = D;
  s.n = n;
  s.seed = seed;
  s.center_spread = 1.0;
  s.patches = equal_patches(count, dims);
  return s;
}

double mean_id(const EmbeddingDataset& ds, std::size_t probes, std::size_t k, std::uint64_t seed) {
  const KnnIndex index(ds);
  const auto rows = sample_rows(ds.size(), probes, seed);
  return mle_id_field(index, rows, {k}).front().summary.mean;
}

// ---------------------------------------------------------------------------

Outcome c1_participation_ratio() {
  Outcome o;
  const double a = participation_ratio(std::vector<double>{1, 1, 1, 1});
  const double b = participation_ratio(std::vector<double>{3, 1});
  const double c = participation_ratio(std::vector<double>{2, 0, 0});
  o.check(std::abs(a - 4.0) <= 1e-12, "PR[1,1,1,1]=" + fmt(a, 15));
  o.check(std::abs(b - 1.6) <= 1e-12, "PR[3,1]=" + fmt(b, 15));
  o.check(std::abs(c - 1.0) <= 1e-12, "PR[2,0,0]=" + fmt(c, 15));
  return o;
}

Outcome c2_mle_point() {
  Outcome o;
  const double e = std::exp(1.0);
  const auto a = mle_id_point(std::vector<double>{1.0, e});
  const auto b = mle_id_point(std::vector<double>{1.0, e, e});
  o.check(a && std::abs(*a - 1.0) <= 1e-9, "k=2 -> " + (a ? fmt(*a, 12) : std::string("none")));
  o.check(b && std::abs(*b - 2.0) <= 1e-9, "k=3 -> " + (b ? fmt(*b, 12) : std::string("none")));
  return o;
}

Outcome c3_id_recovery() {
  Outcome o;
  for (std::size_t d : {2u, 5u, 10u}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = generate_manifold(flat(d, 64, 100000, 30 + d));
    const double m = mean_id(res.dataset, 5000, 20, 40 + d);
    const double secs = elapsed(t0);
    o.check(std::abs(m - static_cast<double>(d)) <= 0.1 * static_cast<double>(d) && secs < 120.0,
            "flat d=" + std::to_string(d) + " mean=" + fmt(m) + " (" + fmt(secs, 3) + "s)");
  }
  const auto t0 = std::chrono::steady_clock::now();
  ManifoldSpec roll = flat(2, 64, 100000, 50);
  roll.kind = ManifoldKind::swiss_roll;
  const double m = mean_id(generate_manifold(roll).dataset, 5000, 20, 51);
  const double secs = elapsed(t0);
  o.check(m >= 1.7 && m <= 2.3 && secs < 120.0, "swiss roll mean=" + fmt(m) + " (" + fmt(secs, 3) + "s)");
  return o;
}

Outcome c4_curvature_ratio() {
  Outcome o;
  auto ratio = [](const EmbeddingDataset& ds, std::uint64_t seed) {
    const double pr = eigendecompose(covariance_matrix(ds)).participation_ratio;
    const double id = mean_id(ds, 2000, 20, seed);
    return std::make_tuple(id / pr, id, pr);
  };
  const auto [rf, idf, prf] = ratio(generate_manifold(flat(5, 64, 50000, 60)).dataset, 61);
  o.check(rf >= 0.85 && rf <= 1.15, "flat ratio=" + fmt(rf) + " (ID " + fmt(idf) + " / PR " + fmt(prf) + ")");
  const auto [rp, idp, prp] = ratio(generate_manifold(patchwork(64, 50000, 8, {2, 3, 4}, 62)).dataset, 63);
  o.check(rp < 0.85, "patchwork ratio=" + fmt(rp) + " (ID " + fmt(idp) + " / PR " + fmt(prp) + ")");
  return o;
}

Outcome c5_random_baseline() {
  Outcome o;
  const double mc = random_alignment_baseline(64, 100000, 70);
  o.check(std::abs(mc - 0.0997) <= 0.005,
          "Monte Carlo mean |cos|=" + fmt(mc) + ", sqrt(2/(pi*64))=" + fmt(analytic_alignment_baseline(64)));
  return o;
}

Outcome c6_local_geometry() {
  Outcome o;
  const auto dict = DimensionDictionary::uniform(64, Category::other);
  auto survey = [&](const EmbeddingDataset& ds, std::uint64_t seed) {
    const KnnIndex index(ds);
    const auto global = eigendecompose(covariance_matrix(ds));
    const auto probes = select_probes(ds, 1000, seed);
    SurveyOptions opt;
    opt.pca.tangent_dim = 10;
    return probe_survey(ds, index, probes, 100, global, dict, opt).summary;
  };
  // A long thin strip: neighborhoods are elongated along the same axis as the global PC1.
  auto strip = flat(2, 64, 50000, 80);
  strip.axis_scales = {1.0, 0.0005};
  const auto f = survey(generate_manifold(strip).dataset, 81);
  o.check(f.mean_alignment > 0.9, "flat alignment=" + fmt(f.mean_alignment));
  o.check(f.frac_tangent_gt60 < 0.05, "flat frac>60deg=" + fmt(f.frac_tangent_gt60));
  const auto p = survey(generate_manifold(patchwork(64, 50000, 6, {12, 16}, 82)).dataset, 83);
  o.check(p.mean_alignment < 0.25, "patchwork alignment=" + fmt(p.mean_alignment));
  o.check(p.frac_tangent_gt60 > 0.5, "patchwork frac>60deg=" + fmt(p.frac_tangent_gt60));
  return o;
}

Outcome c7_knn_exact() {
  Outcome o;
  std::mt19937_64 rng(90);
  std::normal_distribution<double> g;
  const std::size_t n = 2000, D = 64;
  std::vector<float> vec(n * D);
  for (auto& v : vec) v = static_cast<float>(g(rng));
  // Rows 1000..1039 duplicate rows 0..39, so tie-breaking is exercised.
  for (std::size_t i = 0; i < 40; ++i) std::copy_n(vec.begin() + static_cast<long>(i * D), D, vec.begin() + static_cast<long>((1000 + i) * D));
  std::vector<double> lat(n), lon(n);
  for (std::size_t i = 0; i < n; ++i) lat[i] = static_cast<double>(i % 50), lon[i] = static_cast<double>(i / 50);
  const EmbeddingDataset ds(D, vec, lat, lon, std::vector<int>(n, 2020), {}, {});
  const KnnIndex index(ds);
  std::size_t mismatches = 0;
  for (std::size_t q = 0; q < 50; ++q) {
    std::vector<double> query(D);
    if (q < 25) {
      for (std::size_t j = 0; j < D; ++j) query[j] = static_cast<double>(ds.row(q * 3)[j]);
    } else {
      for (auto& v : query) v = 0.5 * g(rng);
    }
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        const double diff = query[j] - static_cast<double>(ds.row(i)[j]);
        s += diff * diff;
      }
      all.emplace_back(s, i);
    }
    std::sort(all.begin(), all.end());
    const auto got = index.search(query, 25);
    for (std::size_t t = 0; t < 25; ++t) {
      if (got.indices[t] != all[t].second || got.distances[t] != std::sqrt(all[t].first)) ++mismatches;
    }
  }
  o.check(mismatches == 0, "mismatched (index, distance) pairs=" + std::to_string(mismatches) + " of 1250");
  return o;
}

Outcome c8_probe_recovery() {
  Outcome o;
  auto res = generate_manifold(flat(10, 64, 10000, 100));
  const Vector u = res.oracle.frames[0].col(0);
  res = attach_planted_properties(std::move(res), {u}, 0.0, 101, {"p"});
  const auto& ds = res.dataset;
  Vector y(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) y[static_cast<Eigen::Index>(i)] = ds.covariate(i, 0);
  const auto m = fit_ridge_probe(ds.embedding_matrix(), y, 1.0);
  const double cosine = std::abs(m.direction.dot(u));
  o.check(m.r2 > 0.99, "R2=" + fmt(m.r2, 6));
  o.check(cosine > 0.99, "|cos|=" + fmt(cosine, 6));

  Matrix x(3, 2);
  x << 1, 2, 3, 1, 0, 4;
  Vector t(3);
  t << 1, 2, 3;
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Vector tc = t.array() - t.mean();
  const double alpha = 1.0;
  // 2x2 inverse written out.
  const double a11 = xc.col(0).squaredNorm() + alpha, a22 = xc.col(1).squaredNorm() + alpha;
  const double a12 = xc.col(0).dot(xc.col(1));
  const double b1 = xc.col(0).dot(tc), b2 = xc.col(1).dot(tc);
  const double det = a11 * a22 - a12 * a12;
  const double beta1 = (a22 * b1 - a12 * b2) / det, beta2 = (a11 * b2 - a12 * b1) / det;
  const auto small = fit_ridge_probe(x, t, alpha);
  const double err = std::max(std::abs(small.coefficients[0] - beta1), std::abs(small.coefficients[1] - beta2));
  o.check(err <= 1e-9, "3x2 closed-form max error=" + fmt(err, 3));
  return o;
}

Outcome c9_direction_rotation() {
  Outcome o;
  // Ridge alpha is in raw embedding units; patches of side 10 keep neighborhood
  // variance well above alpha so the fit quality reflects geometry, not shrinkage.
  auto spec = patchwork(64, 20000, 8, {2, 3, 4}, 110);
  spec.scale = 10.0;
  spec.center_spread = 10.0;
  auto res = attach_patch_properties(generate_manifold(spec), 1, 0.0, 111, {"p"});
  const KnnIndex index(res.dataset);
  const auto sources = sample_rows(res.dataset.size(), 500, 112);
  ProbeSuiteOptions opt;
  opt.seed = 113;
  const auto suite = fit_probe_suite(res.dataset, index, {"p"}, {}, sources, opt);
  std::vector<double> local_r2;
  for (const auto& m : suite.models)
    if (m.scale == ProbeScale::local) local_r2.push_back(m.r2);
  const double med_cos = suite.stability.front().local_global.median;
  const double med_r2 = median(local_r2);
  o.check(med_cos < 0.3, "median local-vs-global |cos|=" + fmt(med_cos));
  o.check(med_r2 > 0.9, "median local R2=" + fmt(med_r2));
  return o;
}

Outcome c10_shift() {
  Outcome o;
  auto base = generate_manifold(flat(2, 64, 20000, 120));
  const Matrix frame = base.oracle.frames[0];
  auto res = attach_planted_properties(std::move(base), {frame.col(0), frame.col(1)}, 0.0, 121, {"p0", "p1"});
  const KnnIndex index(res.dataset);
  CompositionLab lab(res.dataset, index, {"p0", "p1"});
  const auto sources = sample_rows(res.dataset.size(), 300, 122);
  std::vector<double> change, change_local, non_target, abs_pc, abs_rnd;
  bool zeros = true;
  for (std::size_t s : sources) {
    const auto a = lab.targeted_shift(s, "p0", ShiftMethod::local_pc, 1.0);
    const auto r = lab.targeted_shift(s, "p0", ShiftMethod::random, 1.0);
    if (!a.failed) {
      change.push_back(a.target_change);
      change_local.push_back(a.target_change_local);
      non_target.push_back(a.non_target_deviation);
      abs_pc.push_back(std::abs(a.target_change));
    }
    if (!r.failed) abs_rnd.push_back(std::abs(r.target_change));
  }
  for (std::size_t s : {sources[0], sources[1], sources[2]}) {
    for (auto method : all_shift_methods()) {
      if (method == ShiftMethod::probe_regional) continue;  // no regions configured
      const auto z = lab.targeted_shift(s, "p0", method, 0.0);
      zeros = zeros && !z.failed && z.retrieved == s && z.target_change == 0.0 && z.non_target_deviation == 0.0;
    }
  }
  const double mc = mean(change);
  o.check(mc >= 0.8 && mc <= 1.2,
          "local_pc n=1 mean target change=" + fmt(mc) + " global sigma (" + fmt(mean(change_local)) +
              " in neighborhood sigma)");
  o.check(mean(non_target) < 0.2, "non-target=" + fmt(mean(non_target)));
  const double ratio = mean(abs_rnd) / mean(abs_pc);
  o.check(ratio < 0.3, "random/local_pc mean |change|=" + fmt(ratio));
  o.check(zeros, "n=0 exact zeros");
  return o;
}

Outcome c11_coherence_confidence() {
  Outcome o;
  std::mt19937_64 rng(130);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix f(5000, 5);
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < 5; ++j) f(i, j) = u(rng) * static_cast<double>(j + 1);
  Vector beta(5);
  beta << 0.4, -0.2, 1.1, 0.05, -0.6;
  const Vector y = (f * beta).array() + 0.3;
  const auto m = fit_confidence_model(f, y, 0.2, 131);
  const double coef_err = (m.coefficients - beta).cwiseAbs().maxCoeff();
  o.check(m.r2_holdout > 0.99 && coef_err <= 1e-6,
          "planted held-out R2=" + fmt(m.r2_holdout, 6) + " coef error=" + fmt(coef_err, 3));
  Vector permuted = y;
  std::shuffle(permuted.data(), permuted.data() + permuted.size(), rng);
  const auto c = fit_confidence_model(f, permuted, 0.2, 132);
  o.check(c.r2_holdout <= 0.05, "permuted held-out R2=" + fmt(c.r2_holdout));

  auto res = attach_patch_properties(generate_manifold(patchwork(32, 20000, 6, {2, 8}, 133)), 4, 0.0, 134);
  const auto ds = zscore_covariates(res.dataset);
  const KnnIndex index(ds);
  const auto probes = sample_rows(ds.size(), 2000, 135);
  const auto ids = mle_id_field(index, probes, {20}).front();
  const auto coh = retrieval_coherence(ds, index, probes);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (!ids.valid[i]) continue;
    a.push_back(ids.estimates[i]);
    b.push_back(coh[i].mean);
  }
  const double rho = spearman(a, b);
  o.check(rho > 0.0, "patchwork Spearman(local ID, coherence)=" + fmt(rho));
  return o;
}

Outcome c12_dictionary_server() {
  Outcome o;
  const testing::ToolWorld world(3000, 32, 140);
  const auto dir = fs::temp_directory_path() / "embgeo_acceptance_dict";
  fs::create_directories(dir);
  save_geometric_dictionary(world.dict, dir / "dict.json");
  const auto back = load_geometric_dictionary(dir / "dict.json");
  fs::remove_all(dir);
  o.check(back.to_json() == world.dict.to_json() && back.hash() == world.dict.hash(), "dictionary round-trip");

  ToolService svc(world.context());
  HttpToolServer server(svc, 8);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  FeatureExtractor fx(world.ds, *world.index, back.feature_config());
  double worst = 0.0;
  std::size_t compared = 0, failures = 0;
  for (std::size_t row : sample_rows(world.ds.size(), 100, 141)) {
    const json args = {{"lat", world.ds.lat(row)}, {"lon", world.ds.lon(row)}};
    auto res = cli.Post("/tools/get_geometric_context", args.dump(), "application/json");
    if (!res) {
      ++failures;
      continue;
    }
    const auto reply = json::parse(res->body);
    if (reply["status"] != "ok") {
      ++failures;
      continue;
    }
    const auto g = fx.compute(row);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& v = reply["data"]["features"][std::string(kFeatureNames[k])];
      if (!g.valid[k]) {
        if (!v.is_null()) ++failures;
        continue;
      }
      worst = std::max(worst, std::abs(v.get<double>() - g.features[k]));
      ++compared;
    }
    if (g.complete()) {
      worst = std::max(worst, std::abs(reply["data"]["predicted_coherence"].get<double>() -
                                       back.confidence_model.predict(g.feature_vector())));
    }
  }
  o.check(failures == 0 && worst <= 1e-9,
          "HTTP vs library on 100 rows: max |diff|=" + fmt(worst, 3) + " over " + std::to_string(compared) +
              " features, failures=" + std::to_string(failures));

  std::vector<std::string> serial;
  std::vector<json> requests;
  for (std::size_t i = 0; i < 32; ++i) {
    const std::size_t row = (i * 89) % world.ds.size();
    requests.push_back({{"lat", world.ds.lat(row)}, {"lon", world.ds.lon(row)}, {"k", 10}});
    serial.push_back(svc.call("search_similar", requests.back()).dump());
  }
  std::vector<std::future<std::string>> futures;
  for (std::size_t i = 0; i < 32; ++i) {
    futures.push_back(std::async(std::launch::async, [&, i] {
      httplib::Client c("127.0.0.1", port);
      auto res = c.Post("/tools/search_similar", requests[i].dump(), "application/json");
      return res ? json::parse(res->body).dump() : std::string();
    }));
  }
  std::size_t equal = 0;
  for (std::size_t i = 0; i < 32; ++i) equal += futures[i].get() == serial[i];
  o.check(equal == 32, "concurrent==serial " + std::to_string(equal) + "/32");

  auto unknown = cli.Post("/tools/unknown", "{}", "application/json");
  const bool in_band = unknown && unknown->status == 200 && json::parse(unknown->body)["status"] == "error";
  o.check(in_band, "unknown tool in-band error");
  server.stop();
  return o;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(EMBGEO_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Compare two output trees file by file: identical bytes, or numerically equal CSV/JSON within 1e-9 relative.
bool trees_match(const fs::path& a, const fs::path& b, std::string& why) {
  const auto ma = json::parse(io::read_file(a / "manifest.json"));
  const auto mb = json::parse(io::read_file(b / "manifest.json"));
  if (ma["parameters"] != mb["parameters"]) {
    why = "parameters differ";
    return false;
  }
  if (ma["outputs"].size() != mb["outputs"].size()) {
    why = "output lists differ";
    return false;
  }
  for (std::size_t i = 0; i < ma["outputs"].size(); ++i) {
    const auto file = ma["outputs"][i]["file"].get<std::string>();
    if (ma["outputs"][i]["sha256"] == mb["outputs"][i]["sha256"]) continue;
    // Fall back to a tolerant numeric comparison of whitespace/comma separated tokens.
    std::istringstream sa(io::read_file(a / file)), sb(io::read_file(b / file));
    std::string ta, tb;
    auto next = [](std::istringstream& s, std::string& t) {
      t.clear();
      char c;
      while (s.get(c)) {
        if (c == ',' || c == '\n' || c == ' ' || c == ':' || c == '[' || c == ']' || c == '{' || c == '}') {
          if (!t.empty()) return true;
          continue;
        }
        t.push_back(c);
      }
      return !t.empty();
    };
    while (true) {
      const bool ga = next(sa, ta), gb = next(sb, tb);
      if (ga != gb) {
        why = file + " token counts differ";
        return false;
      }
      if (!ga) break;
      if (ta == tb) continue;
      char* ea = nullptr;
      char* eb = nullptr;
      const double va = std::strtod(ta.c_str(), &ea), vb = std::strtod(tb.c_str(), &eb);
      if (*ea != '\0' || *eb != '\0' || std::abs(va - vb) > 1e-9 * std::max(std::abs(va), std::abs(vb))) {
        why = file + ": " + ta + " vs " + tb;
        return false;
      }
    }
  }
  return true;
}

Outcome c13_determinism() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "embgeo_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "regions.json") << R"([{"name":"west","lat_min":0,"lat_max":1,"lon_min":0,"lon_max":0.5},
 {"name":"east","lat_min":0,"lat_max":1,"lon_min":0.5,"lon_max":1}])";
  const json config = {
      {"seed", 2024},
      {"synth",
       {{"manifold",
         {{"kind", "heterogeneous_patchwork"}, {"D", 16}, {"n", 4000}, {"center_spread", 0.5}, {"noise", 0.01},
          {"patches", {{{"dim", 2}}, {{"dim", 3}}, {{"dim", 5}}, {{"dim", 4}}}}}},
        {"patch_properties", 4},
        {"property_noise", 0.05}}},
      {"ingest", {{"zscore", true}}},
      {"global-geometry", {{"k_max", 8}}},
      {"intrinsic-dim", {{"k_list", {10, 20}}, {"probes", 800}}},
      {"local-geometry", {{"probes", 300}, {"baseline_draws", 2000}}},
      {"multiscale", {{"probes", 200}, {"k_list", {20, 100}}, {"baseline_draws", 2000}}},
      {"probes", {{"sources", 80}, {"regions", "regions.json"}}},
      {"shift", {{"sources", 60}, {"regions", "regions.json"}}},
      {"transfer", {{"pairs", 60}}},
      {"analogy", {{"triples", 60}}},
      {"coherence", {{"probes", 800}}},
      {"confidence", {{"probes", 600}}},
      {"dictionary", {{"probes", 600}, {"regions", "regions.json"}}}};
  std::ofstream(dir / "config.json") << config.dump(2);
  const auto cfg = (dir / "config.json").string();
  const auto log = dir / "log.txt";
  if (run_cli("synth --config " + cfg + " --out " + (dir / "synth1").string() + " --threads 1", log) != 0 ||
      run_cli("synth --config " + cfg + " --out " + (dir / "synth3").string() + " --threads 3", log) != 0) {
    o.check(false, "synth failed: " + io::read_file(log));
    return o;
  }
  std::string why;
  o.check(trees_match(dir / "synth1", dir / "synth3", why), "synth" + (why.empty() ? "" : " (" + why + ")"));
  const auto data = (dir / "synth1" / "dataset").string();
  std::size_t matched = 0, total = 0;
  for (const std::string sub : {"ingest", "global-geometry", "intrinsic-dim", "local-geometry", "multiscale", "probes",
                                "shift", "transfer", "analogy", "coherence", "confidence", "dictionary"}) {
    ++total;
    const auto a = dir / (sub + "_t1"), b = dir / (sub + "_t3");
    const int ra = run_cli(sub + " --config " + cfg + " --dataset " + data + " --threads 1 --out " + a.string(), log);
    const int rb = run_cli(sub + " --config " + cfg + " --dataset " + data + " --threads 3 --out " + b.string(), log);
    why.clear();
    if (ra != 0 || rb != 0) {
      o.check(false, sub + " exit " + std::to_string(ra) + "/" + std::to_string(rb) + ": " + io::read_file(log));
      continue;
    }
    if (trees_match(a, b, why)) {
      ++matched;
    } else {
      o.check(false, sub + " differs: " + why);
    }
  }
  o.check(matched == total, std::to_string(matched) + "/" + std::to_string(total) + " subcommands identical at 1 vs 3 threads");
  fs::remove_all(dir);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion ids restrict the run, e.g. `embgeo_acceptance 9 10`.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "participation-ratio-exactness", 1, c1_participation_ratio},
      {2, "mle-point-exactness", 1, c2_mle_point},
      {3, "id-recovery", 480, c3_id_recovery},
      {4, "curvature-diagnostic", 180, c4_curvature_ratio},
      {5, "random-alignment-baseline", 10, c5_random_baseline},
      {6, "local-geometry-contrast", 180, c6_local_geometry},
      {7, "knn-exactness", 10, c7_knn_exact},
      {8, "probe-recovery", 30, c8_probe_recovery},
      {9, "direction-rotation", 180, c9_direction_rotation},
      {10, "shift-sanity", 120, c10_shift},
      {11, "coherence-confidence", 120, c11_coherence_confidence},
      {12, "dictionary-server-integrity", 60, c12_dictionary_server},
      {13, "determinism", 600, c13_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = elapsed(t0);
    if (secs > c.limit_s) o.check(false, "runtime " + fmt(secs, 3) + "s over " + fmt(c.limit_s) + "s");
    failed += !o.pass;
    std::printf("%s %2d %-30s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
