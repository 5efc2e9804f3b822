#include "embgeo/dataset.hpp"

#include "embgeo/io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace embgeo {

using nlohmann::json;

namespace {

std::string position(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row) + ", column '" + std::string(column) + "'";
}

}  // namespace

EmbeddingDataset::EmbeddingDataset(std::size_t dims, std::vector<float> vectors,
                                   std::vector<double> lat, std::vector<double> lon,
                                   std::vector<int> years, std::vector<double> covariates,
                                   std::vector<std::string> covariate_names)
    : n_(lat.size()),
      d_(dims),
      vectors_(std::move(vectors)),
      lat_(std::move(lat)),
      lon_(std::move(lon)),
      years_(std::move(years)),
      covariates_(std::move(covariates)),
      names_(std::move(covariate_names)) {
  validate();
  compute_stats();
}

void EmbeddingDataset::validate() const {
  if (n_ == 0) throw DataError("dataset must contain at least one row");
  if (d_ == 0) throw DataError("embedding dimension must be at least 1");
  if (vectors_.size() != n_ * d_) {
    throw DataError("vector buffer holds " + std::to_string(vectors_.size()) + " values, expected " +
                    std::to_string(n_) + "x" + std::to_string(d_));
  }
  if (lon_.size() != n_ || years_.size() != n_) {
    throw DataError("coordinate/year arrays do not match the row count " + std::to_string(n_));
  }
  if (covariates_.size() != n_ * names_.size()) {
    throw DataError("covariate buffer holds " + std::to_string(covariates_.size()) +
                    " values, expected " + std::to_string(n_) + "x" + std::to_string(names_.size()));
  }
  std::set<std::string_view> seen;
  for (const auto& name : names_) {
    if (name.empty()) throw DataError("empty covariate name");
    if (!seen.insert(name).second) throw DataError("duplicate covariate name '" + name + "'");
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      if (!std::isfinite(vectors_[i * d_ + j])) {
        throw DataError("non-finite embedding value at " + position(i, "e" + std::to_string(j)));
      }
    }
    if (!std::isfinite(lat_[i]) || lat_[i] < -90.0 || lat_[i] > 90.0) {
      throw DataError("latitude out of range at " + position(i, "lat"));
    }
    if (!std::isfinite(lon_[i]) || lon_[i] < -180.0 || lon_[i] > 180.0) {
      throw DataError("longitude out of range at " + position(i, "lon"));
    }
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (!std::isfinite(covariates_[i * names_.size() + j])) {
        throw DataError("non-finite covariate at " + position(i, names_[j]));
      }
    }
  }
}

void EmbeddingDataset::compute_stats() {
  const std::size_t v = names_.size();
  stats_.mean.assign(v, 0.0);
  stats_.stddev.assign(v, 0.0);
  stats_.constant.assign(v, false);
  for (std::size_t j = 0; j < v; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n_; ++i) sum += covariates_[i * v + j];
    const double mean = sum / static_cast<double>(n_);
    double ss = 0.0;
    bool all_equal = true;
    const double first = covariates_[j];
    for (std::size_t i = 0; i < n_; ++i) {
      const double x = covariates_[i * v + j];
      ss += (x - mean) * (x - mean);
      all_equal = all_equal && x == first;
    }
    stats_.mean[j] = mean;
    stats_.stddev[j] = std::sqrt(ss / static_cast<double>(n_));
    stats_.constant[j] = all_equal || !(stats_.stddev[j] > 0.0);
  }
}

Vector EmbeddingDataset::row_vector(std::size_t i) const {
  Vector out(d_);
  for (std::size_t j = 0; j < d_; ++j) out[j] = vectors_[i * d_ + j];
  return out;
}

std::vector<double> EmbeddingDataset::covariate_column(std::size_t j) const {
  std::vector<double> out(n_);
  const std::size_t v = names_.size();
  for (std::size_t i = 0; i < n_; ++i) out[i] = covariates_[i * v + j];
  return out;
}

std::optional<std::size_t> EmbeddingDataset::covariate_index(std::string_view name) const {
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (names_[j] == name) return j;
  }
  return std::nullopt;
}

std::size_t EmbeddingDataset::require_covariate(std::string_view name) const {
  auto idx = covariate_index(name);
  if (!idx) throw DataError("unknown covariate '" + std::string(name) + "'");
  return *idx;
}

std::vector<int> EmbeddingDataset::distinct_years() const {
  std::vector<int> out(years_.begin(), years_.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EmbeddingDataset EmbeddingDataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t v = names_.size();
  std::vector<float> vec;
  vec.reserve(rows.size() * d_);
  std::vector<double> lat, lon, cov;
  std::vector<int> years;
  lat.reserve(rows.size());
  lon.reserve(rows.size());
  years.reserve(rows.size());
  cov.reserve(rows.size() * v);
  for (std::size_t r : rows) {
    if (r >= n_) throw DataError("subset row " + std::to_string(r) + " out of range");
    vec.insert(vec.end(), vectors_.begin() + static_cast<std::ptrdiff_t>(r * d_),
               vectors_.begin() + static_cast<std::ptrdiff_t>((r + 1) * d_));
    lat.push_back(lat_[r]);
    lon.push_back(lon_[r]);
    years.push_back(years_[r]);
    cov.insert(cov.end(), covariates_.begin() + static_cast<std::ptrdiff_t>(r * v),
               covariates_.begin() + static_cast<std::ptrdiff_t>((r + 1) * v));
  }
  return EmbeddingDataset(d_, std::move(vec), std::move(lat), std::move(lon), std::move(years),
                          std::move(cov), names_);
}

EmbeddingDataset EmbeddingDataset::with_covariates(
    const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns) const {
  if (names.size() != columns.size()) throw DataError("covariate names/columns size mismatch");
  const std::size_t v = names_.size();
  const std::size_t w = v + names.size();
  std::vector<double> cov(n_ * w);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != n_) {
      throw DataError("covariate column '" + names[c] + "' has " +
                      std::to_string(columns[c].size()) + " rows, expected " + std::to_string(n_));
    }
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < v; ++j) cov[i * w + j] = covariates_[i * v + j];
    for (std::size_t c = 0; c < columns.size(); ++c) cov[i * w + v + c] = columns[c][i];
  }
  auto all_names = names_;
  all_names.insert(all_names.end(), names.begin(), names.end());
  return EmbeddingDataset(d_, vectors_, lat_, lon_, years_, std::move(cov), std::move(all_names));
}

EmbeddingDataset EmbeddingDataset::with_covariate_matrix(std::vector<double> covariates,
                                                         std::vector<std::string> names) const {
  return EmbeddingDataset(d_, vectors_, lat_, lon_, years_, std::move(covariates),
                          std::move(names));
}

EmbeddingDataset EmbeddingDataset::with_vectors(std::vector<float> vectors) const {
  return EmbeddingDataset(d_, std::move(vectors), lat_, lon_, years_, covariates_, names_);
}

std::string EmbeddingDataset::content_hash() const {
  Sha256 h;
  const std::uint64_t header[3] = {n_, d_, names_.size()};
  h.update_values(std::span<const std::uint64_t>(header));
  for (const auto& name : names_) {
    h.update(name);
    h.update(std::string_view("\0", 1));
  }
  h.update_values(std::span<const float>(vectors_));
  h.update_values(std::span<const double>(lat_));
  h.update_values(std::span<const double>(lon_));
  h.update_values(std::span<const int>(years_));
  h.update_values(std::span<const double>(covariates_));
  return h.hex_digest();
}

Matrix EmbeddingDataset::embedding_matrix() const {
  Matrix m(n_, d_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < d_; ++j) m(i, j) = vectors_[i * d_ + j];
  return m;
}

Matrix EmbeddingDataset::embedding_matrix(std::span<const std::size_t> rows) const {
  Matrix m(rows.size(), d_);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < d_; ++j) m(r, j) = vectors_[rows[r] * d_ + j];
  return m;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats required");

void append_f32le(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

std::vector<float> read_f32le(const std::filesystem::path& path, std::size_t expected) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() != expected * 4) {
    throw DataError(path.filename().string() + " holds " + std::to_string(bytes.size() / 4) +
                    " values, expected " + std::to_string(expected));
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

EmbeddingDataset load_binary(const std::filesystem::path& dir) {
  json meta;
  try {
    meta = json::parse(io::read_file(dir / "meta.json"));
  } catch (const json::parse_error& e) {
    throw DataError("malformed meta.json: " + std::string(e.what()));
  }
  std::size_t n = 0, d = 0, v = 0;
  std::vector<std::string> names;
  std::vector<int> years;
  try {
    n = meta.at("n").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    v = meta.at("v").get<std::size_t>();
    names = meta.at("covariate_names").get<std::vector<std::string>>();
    // Years are stored run-length encoded: [[year, count], ...] in row order.
    for (const auto& run : meta.at("year_runs")) {
      const int year = run.at(0).get<int>();
      const auto count = run.at(1).get<std::size_t>();
      years.insert(years.end(), count, year);
    }
  } catch (const json::exception& e) {
    throw DataError("invalid meta.json: " + std::string(e.what()));
  }
  if (names.size() != v) throw DataError("meta.json: v does not match covariate_names");
  if (years.size() != n) {
    throw DataError("meta.json: year_runs cover " + std::to_string(years.size()) +
                    " rows, expected " + std::to_string(n));
  }
  auto vectors = read_f32le(dir / "vectors.f32le", n * d);
  auto cov_f = read_f32le(dir / "covariates.f32le", n * v);
  auto coords = read_f32le(dir / "coords.f32le", n * 2);
  std::vector<double> cov(cov_f.begin(), cov_f.end());
  std::vector<double> lat(n), lon(n);
  for (std::size_t i = 0; i < n; ++i) {
    lat[i] = coords[2 * i];
    lon[i] = coords[2 * i + 1];
  }
  return EmbeddingDataset(d, std::move(vectors), std::move(lat), std::move(lon), std::move(years),
                          std::move(cov), std::move(names));
}

double parse_cell(const std::string& text, std::size_t row, std::string_view column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError("cannot parse '" + text + "' as a number at " + position(row, column));
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite value '" + text + "' at " + position(row, column));
  }
  return value;
}

EmbeddingDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty CSV file");
  const auto header = io::split_csv_line(line);
  if (header.size() < 4 || header[0] != "lat" || header[1] != "lon" || header[2] != "year") {
    throw DataError("malformed header: expected lat,lon,year,e0,...");
  }
  std::size_t d = 0;
  while (3 + d < header.size() && header[3 + d] == "e" + std::to_string(d)) ++d;
  if (d == 0) throw DataError("malformed header: no embedding columns e0..");
  std::vector<std::string> names(header.begin() + static_cast<std::ptrdiff_t>(3 + d), header.end());
  const std::size_t v = names.size();

  std::vector<float> vectors;
  std::vector<double> lat, lon, cov;
  std::vector<int> years;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    lat.push_back(parse_cell(cells[0], row, "lat"));
    lon.push_back(parse_cell(cells[1], row, "lon"));
    const double y = parse_cell(cells[2], row, "year");
    if (y != std::floor(y)) throw DataError("non-integer year at " + position(row, "year"));
    years.push_back(static_cast<int>(y));
    for (std::size_t j = 0; j < d; ++j) {
      vectors.push_back(static_cast<float>(parse_cell(cells[3 + j], row, header[3 + j])));
    }
    for (std::size_t j = 0; j < v; ++j) cov.push_back(parse_cell(cells[3 + d + j], row, names[j]));
    ++row;
  }
  return EmbeddingDataset(d, std::move(vectors), std::move(lat), std::move(lon), std::move(years),
                          std::move(cov), std::move(names));
}

}  // namespace

DatasetFormat infer_format(const std::filesystem::path& path) {
  return std::filesystem::is_directory(path) ? DatasetFormat::binary : DatasetFormat::csv;
}

EmbeddingDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  if (!std::filesystem::exists(path)) throw DataError("dataset not found: " + path.string());
  return format == DatasetFormat::binary ? load_binary(path) : load_csv(path);
}

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = ds.size();
  json runs = json::array();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && ds.year(j) == ds.year(i)) ++j;
    runs.push_back(json::array({ds.year(i), j - i}));
    i = j;
  }
  json meta = {{"n", n},
               {"d", ds.dims()},
               {"v", ds.num_covariates()},
               {"covariate_names", ds.covariate_names()},
               {"years", ds.distinct_years()},
               {"year_runs", runs}};
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");

  std::string buf;
  buf.reserve(ds.vectors().size() * 4);
  for (float x : ds.vectors()) append_f32le(buf, x);
  io::write_file_atomic(dir / "vectors.f32le", buf);

  buf.clear();
  for (double x : ds.covariates()) append_f32le(buf, static_cast<float>(x));
  io::write_file_atomic(dir / "covariates.f32le", buf);

  buf.clear();
  for (std::size_t i = 0; i < n; ++i) {
    append_f32le(buf, static_cast<float>(ds.lat(i)));
    append_f32le(buf, static_cast<float>(ds.lon(i)));
  }
  io::write_file_atomic(dir / "coords.f32le", buf);
}

void save_dataset_csv(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  std::vector<std::string> header = {"lat", "lon", "year"};
  for (std::size_t j = 0; j < ds.dims(); ++j) header.push_back("e" + std::to_string(j));
  for (const auto& name : ds.covariate_names()) header.push_back(name);
  io::CsvWriter w(header);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.field(ds.lat(i)).field(ds.lon(i)).field(ds.year(i));
    for (float x : ds.row(i)) w.field(static_cast<double>(x));
    for (double x : ds.covariate_row(i)) w.field(x);
    w.end_row();
  }
  io::write_file_atomic(path, w.str());
}

EmbeddingDataset zscore_covariates(const EmbeddingDataset& ds) {
  const std::size_t n = ds.size();
  const std::size_t v = ds.num_covariates();
  const auto& st = ds.stats();
  std::vector<double> cov(n * v);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      cov[i * v + j] = st.constant[j] ? 0.0 : (ds.covariate(i, j) - st.mean[j]) / st.stddev[j];
    }
  }
  return ds.with_covariate_matrix(std::move(cov), ds.covariate_names());
}

std::optional<std::size_t> band_of(double value, std::span<const double> edges) {
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    if (value >= edges[b] && value < edges[b + 1]) return b;
  }
  return std::nullopt;
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (count >= n) return idx;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> stratified_sample_rows(const EmbeddingDataset& ds, std::size_t per_group,
                                                GroupKey key, std::uint64_t seed,
                                                const SubsampleOptions& options) {
  if (ds.size() == 0) throw DataError("cannot subsample an empty dataset");
  if (per_group == 0) throw ConfigError("per_group must be at least 1");
  std::map<long long, std::vector<std::size_t>> groups;
  if (key == GroupKey::year) {
    for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.year(i)].push_back(i);
  } else {
    const std::size_t col = ds.require_covariate(options.elevation_variable);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (auto b = band_of(ds.covariate(i, col), options.band_edges)) {
        groups[static_cast<long long>(*b)].push_back(i);
      }
    }
  }
  std::vector<std::size_t> out;
  for (const auto& [label, rows] : groups) {
    const std::uint64_t group_seed = seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(label + 1));
    for (std::size_t pos : sample_rows(rows.size(), per_group, group_seed)) out.push_back(rows[pos]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

EmbeddingDataset stratified_subsample(const EmbeddingDataset& ds, std::size_t per_group,
                                      GroupKey key, std::uint64_t seed,
                                      const SubsampleOptions& options) {
  const auto rows = stratified_sample_rows(ds, per_group, key, seed, options);
  return ds.subset(rows);
}

// ---------------------------------------------------------------------------
// Dimension dictionary

const std::vector<Category>& all_categories() {
  static const std::vector<Category> cats = {Category::climate, Category::hydrology,
                                             Category::other,   Category::soil,
                                             Category::temperature, Category::terrain,
                                             Category::urban,   Category::vegetation};
  return cats;
}

std::string_view category_name(Category c) {
  switch (c) {
    case Category::climate: return "climate";
    case Category::hydrology: return "hydrology";
    case Category::other: return "other";
    case Category::soil: return "soil";
    case Category::temperature: return "temperature";
    case Category::terrain: return "terrain";
    case Category::urban: return "urban";
    case Category::vegetation: return "vegetation";
  }
  return "other";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : all_categories()) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

DimensionDictionary::DimensionDictionary(std::vector<DimensionEntry> entries, std::size_t dims) {
  std::vector<std::optional<DimensionEntry>> slots(dims);
  for (auto& e : entries) {
    if (e.dim >= dims) {
      throw DataError("dimension dictionary entry for dim " + std::to_string(e.dim) +
                      " exceeds D=" + std::to_string(dims));
    }
    if (slots[e.dim]) throw DataError("duplicate dimension dictionary entry for dim " + std::to_string(e.dim));
    if (!(e.strength >= -1.0 && e.strength <= 1.0)) {
      throw DataError("strength for dim " + std::to_string(e.dim) + " outside [-1, 1]");
    }
    slots[e.dim] = std::move(e);
  }
  entries_.reserve(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    if (!slots[d]) throw DataError("dimension dictionary is missing dim " + std::to_string(d));
    entries_.push_back(std::move(*slots[d]));
  }
}

DimensionDictionary DimensionDictionary::uniform(std::size_t dims, Category c) {
  std::vector<DimensionEntry> entries(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    entries[d].dim = d;
    entries[d].category = c;
  }
  return DimensionDictionary(std::move(entries), dims);
}

DimensionDictionary parse_dimension_dictionary(std::string_view json_text, std::size_t dims) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError("malformed dimension dictionary JSON: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw DataError("dimension dictionary must be a JSON array");
  std::vector<DimensionEntry> entries;
  for (const auto& item : doc) {
    DimensionEntry e;
    try {
      const auto dim = item.at("dim").get<long long>();
      if (dim < 0) throw DataError("negative dim in dimension dictionary");
      e.dim = static_cast<std::size_t>(dim);
      const auto label = item.at("category").get<std::string>();
      auto cat = parse_category(label);
      if (!cat) throw DataError("unknown category '" + label + "' for dim " + std::to_string(dim));
      e.category = *cat;
      if (item.contains("variables")) e.variables = item.at("variables").get<std::vector<std::string>>();
      if (item.contains("strength")) e.strength = item.at("strength").get<double>();
    } catch (const json::exception& ex) {
      throw DataError("invalid dimension dictionary entry: " + std::string(ex.what()));
    }
    entries.push_back(std::move(e));
  }
  return DimensionDictionary(std::move(entries), dims);
}

DimensionDictionary load_dimension_dictionary(const std::filesystem::path& path, std::size_t dims) {
  return parse_dimension_dictionary(io::read_file(path), dims);
}

// ---------------------------------------------------------------------------
// Regions

void validate_regions(const std::vector<RegionSpec>& regions) {
  std::set<std::string> names;
  for (const auto& r : regions) {
    if (r.name.empty()) throw DataError("region with empty name");
    if (!(r.lat_min < r.lat_max)) throw DataError("region '" + r.name + "': lat_min must be < lat_max");
    if (!(r.lon_min < r.lon_max)) throw DataError("region '" + r.name + "': lon_min must be < lon_max");
    if (!names.insert(r.name).second) throw DataError("duplicate region '" + r.name + "'");
  }
}

std::vector<RegionSpec> parse_regions(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError("malformed regions JSON: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw DataError("regions file must be a JSON array");
  std::vector<RegionSpec> out;
  for (const auto& item : doc) {
    RegionSpec r;
    try {
      r.name = item.at("name").get<std::string>();
      r.lat_min = item.at("lat_min").get<double>();
      r.lat_max = item.at("lat_max").get<double>();
      r.lon_min = item.at("lon_min").get<double>();
      r.lon_max = item.at("lon_max").get<double>();
    } catch (const json::exception& e) {
      throw DataError("invalid region entry: " + std::string(e.what()));
    }
    out.push_back(std::move(r));
  }
  validate_regions(out);
  return out;
}

std::vector<RegionSpec> load_regions(const std::filesystem::path& path) {
  return parse_regions(io::read_file(path));
}

std::optional<std::size_t> assign_region(const std::vector<RegionSpec>& regions, double lat,
                                         double lon) {
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (regions[r].contains(lat, lon)) return r;
  }
  return std::nullopt;
}

}  // namespace embgeo
