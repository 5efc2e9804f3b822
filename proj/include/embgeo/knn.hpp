#pragma once

#include "embgeo/dataset.hpp"

#include <optional>

namespace embgeo {

/// k nearest rows of one query, ascending by (distance, row index).
struct NeighborSet {
  std::optional<std::size_t> query_row;
  std::vector<std::size_t> indices;
  std::vector<double> distances;

  std::size_t size() const { return indices.size(); }
};

/**
 * Exact Euclidean k-NN by blocked linear scan.
 *
 * Squared distances accumulate in double, one dimension at a time in index
 * order, so every code path (single query, batched, threaded) produces the
 * same bits as a naive double loop. Holds a view of the dataset, which must
 * outlive the index.
 */
class KnnIndex {
 public:
  explicit KnnIndex(const EmbeddingDataset& ds);

  std::size_t size() const { return n_; }
  std::size_t dims() const { return d_; }

  /// `exclude` removes one row from consideration (used for self-exclusion).
  NeighborSet search(std::span<const double> query, std::size_t k,
                     std::optional<std::size_t> exclude = std::nullopt) const;
  NeighborSet search(const Vector& query, std::size_t k,
                     std::optional<std::size_t> exclude = std::nullopt) const;
  NeighborSet search_row(std::size_t row, std::size_t k, bool exclude_self) const;

  /// One NeighborSet per row, computed on up to `threads` workers.
  std::vector<NeighborSet> search_rows(std::span<const std::size_t> rows, std::size_t k,
                                       bool exclude_self, int threads = 1) const;

  /// Squared distance between a query and one row, same arithmetic as search().
  double squared_distance(std::span<const double> query, std::size_t row) const;

 private:
  const float* data_;
  std::size_t n_;
  std::size_t d_;
};

/// Reference O(N) scan with no blocking; used as a test oracle.
NeighborSet naive_knn(const EmbeddingDataset& ds, std::span<const double> query, std::size_t k,
                      std::optional<std::size_t> exclude = std::nullopt);

}  // namespace embgeo
