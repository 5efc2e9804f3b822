#pragma once

#include "embgeo/coherence.hpp"

#include <nlohmann/json.hpp>

#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace embgeo {

struct GazetteerEntry {
  std::string name;
  double lat = 0.0;
  double lon = 0.0;
};

/// Place-name lookup: case-insensitive exact match, then a unique-prefix fallback.
class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(std::vector<GazetteerEntry> entries);

  static std::string normalize(std::string_view name);
  /// Throws DataError for unknown or ambiguous names.
  const GazetteerEntry& resolve(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<GazetteerEntry> entries_;
  std::vector<std::pair<std::string, std::size_t>> sorted_;  // normalized name -> entry
};

Gazetteer load_gazetteer(const std::filesystem::path& path);
Gazetteer parse_gazetteer(std::string_view csv_text);

/// Everything a tool service needs; the service borrows, never owns, these.
struct ToolContext {
  const EmbeddingDataset* dataset = nullptr;
  const KnnIndex* index = nullptr;
  const DimensionDictionary* dimensions = nullptr;
  const GeometricDictionary* dictionary = nullptr;
  const Gazetteer* gazetteer = nullptr;
};

/**
 * The nine tools as pure functions of (loaded artifacts, request). Errors are
 * returned in-band as {"status":"error","error_message":...}. Per-row
 * geometry is memoized in a bounded LRU cache; thread-safe.
 */
class ToolService {
 public:
  ToolService(ToolContext context, std::size_t cache_size = 4096);

  static const std::vector<std::string>& tool_names();

  nlohmann::json call(std::string_view tool, const nlohmann::json& args) const;
  nlohmann::json health() const;

  /// Row geometry with the dictionary's feature configuration (cached).
  RowGeometry geometry(std::size_t row) const;

 private:
  nlohmann::json dispatch(std::string_view tool, const nlohmann::json& args) const;
  std::size_t snap(const nlohmann::json& args, std::optional<int> year, double* distance) const;
  nlohmann::json location_profile(std::size_t row, double snap_distance) const;
  nlohmann::json geometric_context(std::size_t row) const;

  ToolContext ctx_;
  std::unique_ptr<FeatureExtractor> features_;
  double lat_min_, lat_max_, lon_min_, lon_max_;
  std::string dictionary_hash_;

  std::size_t cache_size_;
  mutable std::mutex cache_mutex_;
  mutable std::list<std::pair<std::size_t, RowGeometry>> lru_;
  mutable std::unordered_map<std::size_t, std::list<std::pair<std::size_t, RowGeometry>>::iterator> cache_;
};

struct ServerConfig {
  std::filesystem::path dataset;
  std::filesystem::path dictionary;
  std::filesystem::path dimension_dictionary;  // empty: every dim labeled "other"
  std::filesystem::path regions;
  std::filesystem::path gazetteer;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t cache_size = 4096;
  int threads = 8;

  /// Unknown keys are rejected; relative paths resolve against `base_dir`.
  static ServerConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// HTTP front end: GET /health, POST /tools/{name}.
class HttpToolServer {
 public:
  HttpToolServer(const ToolService& service, int threads = 8);
  ~HttpToolServer();
  HttpToolServer(const HttpToolServer&) = delete;
  HttpToolServer& operator=(const HttpToolServer&) = delete;

  /// Bind to host:port (port 0 picks a free port); returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  void listen();
  /// bind + listen on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Load every artifact named by the config and serve until stopped; fails fast on missing files.
int serve(const ServerConfig& config);

}  // namespace embgeo
