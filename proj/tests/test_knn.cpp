#include "embgeo/knn.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace embgeo;
using embgeo::testing::make_dataset;
using embgeo::testing::random_dataset;

namespace {

// Independent double loop: full sort on (squared distance, row).
std::vector<std::pair<double, std::size_t>> brute(const EmbeddingDataset& ds, std::span<const double> q,
                                                  std::size_t k, std::optional<std::size_t> skip) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (skip && *skip == i) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < ds.dims(); ++j) {
      const double diff = q[j] - static_cast<double>(ds.row(i)[j]);
      s += diff * diff;
    }
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  all.resize(k);
  return all;
}

}  // namespace

TEST(Knn, LineExample) {
  const auto ds = make_dataset({{0}, {1}, {3}});
  const KnnIndex index(ds);
  const auto nn = index.search_row(0, 2, true);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn.indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(nn.distances, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(nn.query_row, 0u);
}

TEST(Knn, TiesBreakByLowerRow) {
  const auto ds = make_dataset({{2}, {-1}, {0}, {1}, {-1}});
  const KnnIndex index(ds);
  const auto nn = index.search_row(2, 4, true);
  EXPECT_EQ(nn.indices, (std::vector<std::size_t>{1, 3, 4, 0}));
}

TEST(Knn, SingleRowIndex) {
  const auto ds = make_dataset({{1.0, 2.0}});
  const KnnIndex index(ds);
  EXPECT_THROW(index.search_row(0, 1, true), DataError);
  EXPECT_EQ(index.search_row(0, 1, false).indices, (std::vector<std::size_t>{0}));
}

TEST(Knn, RangeAndFiniteChecks) {
  const auto ds = random_dataset(10, 3, 1);
  const KnnIndex index(ds);
  EXPECT_THROW(index.search_row(0, 0, true), DataError);
  EXPECT_THROW(index.search_row(0, 10, true), DataError);
  EXPECT_NO_THROW(index.search_row(0, 10, false));
  const std::vector<double> bad = {0.0, std::numeric_limits<double>::quiet_NaN(), 0.0};
  EXPECT_THROW(index.search(bad, 1), DataError);
  const std::vector<double> wrong = {0.0, 0.0};
  EXPECT_THROW(index.search(wrong, 1), DataError);
}

TEST(Knn, MatchesBruteForceOracle) {
  const auto ds = random_dataset(2000, 16, 42);
  const KnnIndex index(ds);
  for (std::size_t q = 0; q < 50; ++q) {
    const std::size_t row = q * 39;
    std::vector<double> query(ds.row(row).begin(), ds.row(row).end());
    const auto got = index.search_row(row, 25, true);
    const auto want = brute(ds, query, 25, row);
    ASSERT_EQ(got.size(), 25u);
    for (std::size_t t = 0; t < 25; ++t) {
      EXPECT_EQ(got.indices[t], want[t].second);
      EXPECT_EQ(got.distances[t], std::sqrt(want[t].first));
    }
  }
}

TEST(Knn, PrefixMonotoneAndBatchEqualsSingle) {
  const auto ds = random_dataset(500, 8, 7);
  const KnnIndex index(ds);
  const auto k10 = index.search_row(17, 10, true);
  const auto k11 = index.search_row(17, 11, true);
  EXPECT_TRUE(std::equal(k10.indices.begin(), k10.indices.end(), k11.indices.begin()));
  std::vector<std::size_t> rows = {0, 5, 17, 499};
  const auto serial = index.search_rows(rows, 12, true, 1);
  const auto parallel = index.search_rows(rows, 12, true, 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(serial[i].indices, parallel[i].indices);
    EXPECT_EQ(serial[i].distances, parallel[i].distances);
    EXPECT_EQ(serial[i].indices, index.search_row(rows[i], 12, true).indices);
  }
  const KnnIndex again(ds);
  EXPECT_EQ(again.search_row(17, 10, true).distances, k10.distances);
}

TEST(Knn, LibraryNaiveAgreesWithBlocked) {
  const auto ds = random_dataset(300, 5, 3);
  const KnnIndex index(ds);
  const std::vector<double> q = {0.1, -0.2, 0.3, 0.0, 1.0};
  const auto a = index.search(q, 20);
  const auto b = naive_knn(ds, q, 20);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(a.distances, b.distances);
  for (std::size_t t = 1; t < a.size(); ++t) EXPECT_LE(a.distances[t - 1], a.distances[t]);
}
