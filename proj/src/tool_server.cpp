#include "embgeo/tool_server.hpp"

#include "embgeo/io.hpp"

// The default backlog of 5 drops bursts of concurrent agent calls.
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include <httplib.h>

#include <cctype>
#include <cmath>
#include <iostream>
#include <set>
#include <thread>

namespace embgeo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Gazetteer

std::string Gazetteer::normalize(std::string_view name) {
  std::string out;
  bool space = false;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += u < 0x80 ? static_cast<char>(std::tolower(u)) : c;
  }
  return out;
}

Gazetteer::Gazetteer(std::vector<GazetteerEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!(e.lat >= -90.0 && e.lat <= 90.0 && e.lon >= -180.0 && e.lon <= 180.0)) {
      throw DataError("gazetteer entry '" + e.name + "' has out-of-range coordinates");
    }
    auto key = normalize(e.name);
    if (key.empty()) throw DataError("gazetteer entry with empty name");
    sorted_.emplace_back(std::move(key), i);
  }
  std::sort(sorted_.begin(), sorted_.end());
  for (std::size_t i = 1; i < sorted_.size(); ++i) {
    if (sorted_[i].first == sorted_[i - 1].first) {
      throw DataError("duplicate gazetteer name '" + sorted_[i].first + "'");
    }
  }
}

const GazetteerEntry& Gazetteer::resolve(std::string_view name) const {
  const auto key = normalize(name);
  if (key.empty()) throw DataError("empty place name");
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), std::make_pair(key, std::size_t{0}));
  if (it != sorted_.end() && it->first == key) return entries_[it->second];
  std::vector<std::size_t> matches;
  for (auto p = it; p != sorted_.end() && p->first.compare(0, key.size(), key) == 0; ++p) {
    matches.push_back(p->second);
  }
  if (matches.size() == 1) return entries_[matches.front()];
  if (matches.empty()) throw DataError("unknown place '" + std::string(name) + "'");
  std::string list;
  for (std::size_t i = 0; i < std::min<std::size_t>(matches.size(), 5); ++i) {
    list += (i ? ", " : "") + entries_[matches[i]].name;
  }
  throw DataError("ambiguous place '" + std::string(name) + "': " + list);
}

Gazetteer parse_gazetteer(std::string_view csv_text) {
  std::vector<GazetteerEntry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < csv_text.size()) {
    std::size_t end = csv_text.find('\n', pos);
    if (end == std::string_view::npos) end = csv_text.size();
    const auto line = csv_text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv_line(line);
    if (line_no == 1) {
      if (cells.size() != 3 || cells[0] != "name" || cells[1] != "lat" || cells[2] != "lon") {
        throw DataError("gazetteer header must be name,lat,lon");
      }
      continue;
    }
    if (cells.size() != 3) throw DataError("gazetteer line " + std::to_string(line_no) + ": expected 3 fields");
    try {
      entries.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2])});
    } catch (const std::exception&) {
      throw DataError("gazetteer line " + std::to_string(line_no) + ": bad coordinate");
    }
  }
  return Gazetteer(std::move(entries));
}

Gazetteer load_gazetteer(const std::filesystem::path& path) { return parse_gazetteer(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Tool service

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json ok(json data) { return {{"status", "ok"}, {"data", std::move(data)}, {"error_message", nullptr}}; }

json fail(const std::string& message) {
  return {{"status", "error"}, {"data", nullptr}, {"error_message", message}};
}

double require_number(const json& args, const char* key) {
  if (!args.contains(key) || !args.at(key).is_number()) {
    throw ConfigError(std::string("malformed arguments: '") + key + "' must be a number");
  }
  const double v = args.at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(std::string("malformed arguments: '") + key + "' must be finite");
  return v;
}

std::string require_string(const json& args, const char* key) {
  if (!args.contains(key) || !args.at(key).is_string()) {
    throw ConfigError(std::string("malformed arguments: '") + key + "' must be a string");
  }
  return args.at(key).get<std::string>();
}

json profile_json(const RegionalProfile& r) {
  json dims = json::array();
  for (const auto& d : r.top_dims) dims.push_back({{"dim", d.dim}, {"fraction", d.fraction}});
  json feats = json::object();
  for (std::size_t f = 0; f < 5 && f < r.mean_features.size(); ++f) {
    feats[std::string(kFeatureNames[f])] = num(r.mean_features[f]);
  }
  return {{"name", r.name},
          {"bounds", {{"lat_min", r.box.lat_min}, {"lat_max", r.box.lat_max},
                      {"lon_min", r.box.lon_min}, {"lon_max", r.box.lon_max}}},
          {"probe_count", r.count},
          {"mean_coherence", num(r.mean_coherence)},
          {"mean_local_id", num(r.mean_local_id)},
          {"top_dimensions", dims},
          {"mean_features", feats}};
}

}  // namespace

const std::vector<std::string>& ToolService::tool_names() {
  static const std::vector<std::string> names = {
      "resolve_location",      "retrieve_embedding",          "search_similar",
      "interpret_dimensions",  "compare_locations",           "get_geometric_context",
      "assess_retrieval_confidence", "get_regional_profile", "identify_similar_regions"};
  return names;
}

ToolService::ToolService(ToolContext context, std::size_t cache_size)
    : ctx_(context), cache_size_(cache_size) {
  if (!ctx_.dataset || !ctx_.index || !ctx_.dictionary) {
    throw ConfigError("tool service needs a dataset, an index and a geometric dictionary");
  }
  if (ctx_.dimensions && ctx_.dimensions->dims() != ctx_.dataset->dims()) {
    throw DataError("dimension dictionary does not match the dataset dimension");
  }
  features_ = std::make_unique<FeatureExtractor>(*ctx_.dataset, *ctx_.index, ctx_.dictionary->feature_config());
  const auto& ds = *ctx_.dataset;
  lat_min_ = *std::min_element(ds.lats().begin(), ds.lats().end());
  lat_max_ = *std::max_element(ds.lats().begin(), ds.lats().end());
  lon_min_ = *std::min_element(ds.lons().begin(), ds.lons().end());
  lon_max_ = *std::max_element(ds.lons().begin(), ds.lons().end());
  dictionary_hash_ = ctx_.dictionary->hash();
}

json ToolService::health() const {
  return {{"status", "ok"},
          {"n", ctx_.dataset->size()},
          {"d", ctx_.dataset->dims()},
          {"dictionary_hash", dictionary_hash_},
          {"tools", tool_names()}};
}

RowGeometry ToolService::geometry(std::size_t row) const {
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(row);
    if (it != cache_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
  }
  RowGeometry g = features_->compute(row);
  if (cache_size_ == 0) return g;
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (!cache_.count(row)) {
    lru_.emplace_front(row, g);
    cache_[row] = lru_.begin();
    while (lru_.size() > cache_size_) {
      cache_.erase(lru_.back().first);
      lru_.pop_back();
    }
  }
  return g;
}

std::size_t ToolService::snap(const json& args, std::optional<int> year, double* distance) const {
  const double lat = require_number(args, "lat");
  const double lon = require_number(args, "lon");
  if (lat < lat_min_ || lat > lat_max_ || lon < lon_min_ || lon > lon_max_) {
    throw DataError("coordinates (" + io::format_double(lat) + ", " + io::format_double(lon) +
                    ") lie outside the dataset bounding box");
  }
  const auto& ds = *ctx_.dataset;
  std::optional<std::size_t> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (year && ds.year(i) != *year) continue;
    const double dlat = ds.lat(i) - lat, dlon = ds.lon(i) - lon;
    const double d2 = dlat * dlat + dlon * dlon;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  if (!best) throw DataError("no rows for year " + std::to_string(year.value_or(0)));
  if (distance) *distance = std::sqrt(best_d2);
  return *best;
}

json ToolService::location_profile(std::size_t row, double snap_distance) const {
  const auto& ds = *ctx_.dataset;
  json cov = json::object();
  for (std::size_t j = 0; j < ds.num_covariates(); ++j) cov[ds.covariate_names()[j]] = ds.covariate(row, j);
  std::vector<double> emb(ds.row(row).begin(), ds.row(row).end());
  return {{"lat", ds.lat(row)},
          {"lon", ds.lon(row)},
          {"year", ds.year(row)},
          {"snap_distance_deg", snap_distance},
          {"embedding", emb},
          {"covariates", cov}};
}

json ToolService::geometric_context(std::size_t row) const {
  const auto g = geometry(row);
  json features = json::object();
  for (std::size_t f = 0; f < 5; ++f) features[std::string(kFeatureNames[f])] = num(g.features[f]);
  json out = {{"features", features}};
  out["predicted_coherence"] =
      g.complete() ? num(ctx_.dictionary->confidence_model.predict(g.feature_vector())) : json(nullptr);
  return out;
}

json ToolService::call(std::string_view tool, const json& args) const {
  try {
    if (!args.is_object()) throw ConfigError("malformed arguments: expected a JSON object");
    return ok(dispatch(tool, args));
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

json ToolService::dispatch(std::string_view tool, const json& args) const {
  const auto& ds = *ctx_.dataset;
  if (tool == "resolve_location") {
    if (!ctx_.gazetteer) throw DataError("no gazetteer loaded");
    const auto& e = ctx_.gazetteer->resolve(require_string(args, "name"));
    return {{"name", e.name}, {"lat", e.lat}, {"lon", e.lon}};
  }
  if (tool == "retrieve_embedding") {
    std::optional<int> year;
    if (args.contains("year") && !args.at("year").is_null()) {
      if (!args.at("year").is_number_integer()) throw ConfigError("malformed arguments: 'year' must be an integer");
      year = args.at("year").get<int>();
    }
    double dist = 0.0;
    const std::size_t row = snap(args, year, &dist);
    return location_profile(row, dist);
  }
  if (tool == "search_similar") {
    std::size_t k = 10;
    if (args.contains("k")) {
      if (!args.at("k").is_number_integer() || args.at("k").get<long long>() < 1) {
        throw ConfigError("malformed arguments: 'k' must be a positive integer");
      }
      k = args.at("k").get<std::size_t>();
    }
    if (k + 1 > ds.size()) throw ConfigError("k exceeds the number of other rows");
    double dist = 0.0;
    const std::size_t row = snap(args, std::nullopt, &dist);
    const auto nn = ctx_.index->search_row(row, k, true);
    json neighbors = json::array();
    for (std::size_t t = 0; t < nn.size(); ++t) {
      json n = location_profile(nn.indices[t], 0.0);
      n.erase("snap_distance_deg");
      n.erase("embedding");
      n["embedding_distance"] = nn.distances[t];
      neighbors.push_back(std::move(n));
    }
    json query = location_profile(row, dist);
    query.erase("embedding");
    return {{"query", query}, {"k", k}, {"neighbors", neighbors}};
  }
  if (tool == "interpret_dimensions") {
    if (!ctx_.dimensions) throw DataError("no dimension dictionary loaded");
    std::vector<std::size_t> dims;
    if (args.contains("dims")) {
      if (!args.at("dims").is_array()) throw ConfigError("malformed arguments: 'dims' must be an array");
      for (const auto& d : args.at("dims")) {
        if (!d.is_number_integer() || d.get<long long>() < 0 ||
            d.get<std::size_t>() >= ctx_.dimensions->dims()) {
          throw ConfigError("malformed arguments: dimension index out of range");
        }
        dims.push_back(d.get<std::size_t>());
      }
    } else {
      for (std::size_t d = 0; d < ctx_.dimensions->dims(); ++d) dims.push_back(d);
    }
    json entries = json::array();
    for (std::size_t d : dims) {
      const auto& e = ctx_.dimensions->entry(d);
      entries.push_back({{"dim", e.dim},
                         {"category", category_name(e.category)},
                         {"variables", e.variables},
                         {"strength", e.strength}});
    }
    return {{"dimensions", entries}};
  }
  if (tool == "compare_locations") {
    if (!args.contains("a") || !args.contains("b") || !args.at("a").is_object() || !args.at("b").is_object()) {
      throw ConfigError("malformed arguments: 'a' and 'b' must be objects with lat/lon");
    }
    double da = 0.0, db = 0.0;
    const std::size_t ra = snap(args.at("a"), std::nullopt, &da);
    const std::size_t rb = snap(args.at("b"), std::nullopt, &db);
    json deltas = json::object();
    for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
      deltas[ds.covariate_names()[j]] = ds.covariate(rb, j) - ds.covariate(ra, j);
    }
    const double emb_dist = std::sqrt(ctx_.index->squared_distance(
        std::vector<double>(ds.row(ra).begin(), ds.row(ra).end()), rb));
    return {{"a", location_profile(ra, da)},
            {"b", location_profile(rb, db)},
            {"deltas_b_minus_a", deltas},
            {"embedding_distance", emb_dist}};
  }
  if (tool == "get_geometric_context") {
    double dist = 0.0;
    const std::size_t row = snap(args, std::nullopt, &dist);
    const auto g = geometry(row);
    json out = geometric_context(row);
    out["lat"] = ds.lat(row);
    out["lon"] = ds.lon(row);
    out["snap_distance_deg"] = dist;
    out["local_id"] = num(g.features[0]);
    out["local_pr"] = num(g.features[1]);
    if (ctx_.dimensions && g.pc1.size() > 0) {
      out["dominant_category"] = category_name(dominant_category(g.pc1, *ctx_.dimensions));
    } else {
      out["dominant_category"] = nullptr;
    }
    out["region"] = nullptr;
    for (const auto& r : ctx_.dictionary->regions) {
      if (r.box.contains(ds.lat(row), ds.lon(row))) {
        out["region"] = profile_json(r);
        break;
      }
    }
    return out;
  }
  if (tool == "assess_retrieval_confidence") {
    double dist = 0.0;
    const std::size_t row = snap(args, std::nullopt, &dist);
    json out = geometric_context(row);
    out["lat"] = ds.lat(row);
    out["lon"] = ds.lon(row);
    out["snap_distance_deg"] = dist;
    out["model_r2_holdout"] = ctx_.dictionary->confidence_model.r2_holdout;
    out["note"] = "predicted_coherence is the expected neighbor spread; lower means more coherent retrieval";
    return out;
  }
  if (tool == "get_regional_profile") {
    const auto name = require_string(args, "name");
    const auto* r = ctx_.dictionary->find_region(name);
    if (!r) throw DataError("unknown region '" + name + "'");
    return profile_json(*r);
  }
  if (tool == "identify_similar_regions") {
    double dist = 0.0;
    const std::size_t row = snap(args, std::nullopt, &dist);
    const auto g = geometry(row);
    if (!g.complete()) throw DataError("geometric features are degenerate at this location");
    std::vector<std::pair<double, std::size_t>> ranking;
    const auto& regions = ctx_.dictionary->regions;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const auto& mf = regions[r].mean_features;
      if (mf.size() != 5 || std::any_of(mf.begin(), mf.end(), [](double v) { return !std::isfinite(v); })) continue;
      double d2 = 0.0;
      for (std::size_t f = 0; f < 5; ++f) d2 += (g.features[f] - mf[f]) * (g.features[f] - mf[f]);
      ranking.emplace_back(std::sqrt(d2), r);
    }
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    json out = json::array();
    for (const auto& [d, r] : ranking) out.push_back({{"name", regions[r].name}, {"distance", d}});
    return {{"lat", ds.lat(row)},
            {"lon", ds.lon(row)},
            {"metric", "toolkit definition: Euclidean distance between the location's five geometric "
                       "features and each region's mean feature vector"},
            {"ranking", out}};
  }
  throw ConfigError("unknown tool '" + std::string(tool) + "'");
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpToolServer::Impl {
  httplib::Server server;
  std::thread thread;
};

HttpToolServer::HttpToolServer(const ToolService& service, int threads) : impl_(std::make_unique<Impl>()) {
  const auto workers = static_cast<std::size_t>(std::max(threads, 1));
  impl_->server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  impl_->server.Get("/health", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.health().dump(), "application/json");
  });
  impl_->server.Post(R"(/tools/([A-Za-z0-9_\-]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    json args = json::object();
    json reply;
    try {
      if (!req.body.empty()) args = json::parse(req.body);
      reply = service.call(req.matches[1].str(), args);
    } catch (const json::parse_error& e) {
      reply = fail(std::string("malformed JSON body: ") + e.what());
    }
    res.set_content(reply.dump(), "application/json");
  });
}

HttpToolServer::~HttpToolServer() { stop(); }

int HttpToolServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind to " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error("cannot bind to " + host + ":" + std::to_string(port) + " (port busy?)");
  }
  return port;
}

void HttpToolServer::listen() { impl_->server.listen_after_bind(); }

int HttpToolServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpToolServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

ServerConfig ServerConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  static const std::set<std::string> known = {"dataset", "dictionary", "dimension_dictionary", "regions",
                                              "gazetteer", "host", "port", "cache_size", "threads"};
  if (!j.is_object()) throw ConfigError("server config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown server config key '" + key + "'");
  }
  auto path = [&](const char* key) -> std::filesystem::path {
    if (!j.contains(key)) return {};
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  ServerConfig c;
  try {
    c.dataset = path("dataset");
    c.dictionary = path("dictionary");
    c.dimension_dictionary = path("dimension_dictionary");
    c.regions = path("regions");
    c.gazetteer = path("gazetteer");
    if (j.contains("host")) c.host = j.at("host").get<std::string>();
    if (j.contains("port")) c.port = j.at("port").get<int>();
    if (j.contains("cache_size")) c.cache_size = j.at("cache_size").get<std::size_t>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid server config: " + std::string(e.what()));
  }
  if (c.dataset.empty()) throw ConfigError("server config: 'dataset' is required");
  if (c.dictionary.empty()) throw ConfigError("server config: 'dictionary' is required");
  if (c.port < 0 || c.port > 65535) throw ConfigError("server config: 'port' out of range");
  return c;
}

int serve(const ServerConfig& config) {
  const auto ds = load_dataset(config.dataset, infer_format(config.dataset));
  const auto dictionary = load_geometric_dictionary(config.dictionary);
  std::optional<DimensionDictionary> dims;
  if (!config.dimension_dictionary.empty()) dims = load_dimension_dictionary(config.dimension_dictionary, ds.dims());
  if (!config.regions.empty()) {
    for (const auto& r : load_regions(config.regions)) {
      if (!dictionary.find_region(r.name)) throw DataError("dictionary has no profile for region '" + r.name + "'");
    }
  }
  std::optional<Gazetteer> gazetteer;
  if (!config.gazetteer.empty()) gazetteer = load_gazetteer(config.gazetteer);
  const KnnIndex index(ds);
  ToolContext ctx{&ds, &index, dims ? &*dims : nullptr, &dictionary, gazetteer ? &*gazetteer : nullptr};
  const ToolService service(ctx, config.cache_size);
  HttpToolServer server(service, config.threads);
  const int port = server.bind(config.host, config.port);
  std::cerr << "serving " << ds.size() << " rows on http://" << config.host << ":" << port << "\n";
  server.listen();
  return 0;
}

}  // namespace embgeo
