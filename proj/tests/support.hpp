#pragma once

#include "embgeo/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace embgeo::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("embgeo_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Dataset from explicit rows; coordinates on a small grid, year 2020.
inline EmbeddingDataset make_dataset(const std::vector<std::vector<double>>& rows,
                                     const std::vector<std::vector<double>>& covariate_columns = {},
                                     std::vector<std::string> names = {}) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  std::vector<float> vec;
  for (const auto& r : rows)
    for (double v : r) vec.push_back(static_cast<float>(v));
  std::vector<double> lat(n), lon(n);
  for (std::size_t i = 0; i < n; ++i) {
    lat[i] = static_cast<double>(i % 100) * 0.01;
    lon[i] = static_cast<double>(i / 100) * 0.01;
  }
  std::vector<double> cov;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& c : covariate_columns) cov.push_back(c[i]);
  if (names.empty())
    for (std::size_t j = 0; j < covariate_columns.size(); ++j) names.push_back("c" + std::to_string(j));
  return EmbeddingDataset(d, std::move(vec), std::move(lat), std::move(lon), std::vector<int>(n, 2020),
                          std::move(cov), std::move(names));
}

inline EmbeddingDataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (auto& v : r) v = g(rng);
  return make_dataset(rows);
}

}  // namespace embgeo::testing
