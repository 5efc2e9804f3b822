#include "embgeo/knn.hpp"

#include <cmath>
#include <queue>

namespace embgeo {

namespace {

using Candidate = std::pair<double, std::size_t>;

// Max-heap on (squared distance, index): the top is the worst kept neighbor.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  void offer(double d2, std::size_t idx) {
    if (heap_.size() < k_) {
      heap_.emplace_back(d2, idx);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (Candidate(d2, idx) < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = {d2, idx};
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  NeighborSet finish() {
    std::sort_heap(heap_.begin(), heap_.end());
    NeighborSet out;
    out.indices.reserve(heap_.size());
    out.distances.reserve(heap_.size());
    for (const auto& [d2, idx] : heap_) {
      out.indices.push_back(idx);
      out.distances.push_back(std::sqrt(d2));
    }
    return out;
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

void check_query(std::span<const double> query, std::size_t d, std::size_t k, std::size_t available) {
  if (query.size() != d) {
    throw DataError("query has " + std::to_string(query.size()) + " dimensions, index has " +
                    std::to_string(d));
  }
  for (double q : query) {
    if (!std::isfinite(q)) throw DataError("non-finite query vector");
  }
  if (k < 1 || k > available) {
    throw DataError("k=" + std::to_string(k) + " outside [1, " + std::to_string(available) + "]");
  }
}

}  // namespace

KnnIndex::KnnIndex(const EmbeddingDataset& ds)
    : data_(ds.vectors().data()), n_(ds.size()), d_(ds.dims()) {
  if (n_ == 0) throw DataError("cannot index an empty dataset");
}

double KnnIndex::squared_distance(std::span<const double> query, std::size_t row) const {
  const float* x = data_ + row * d_;
  double acc = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    const double diff = query[j] - static_cast<double>(x[j]);
    acc += diff * diff;
  }
  return acc;
}

NeighborSet KnnIndex::search(std::span<const double> query, std::size_t k,
                             std::optional<std::size_t> exclude) const {
  const bool has_exclude = exclude && *exclude < n_;
  check_query(query, d_, k, n_ - (has_exclude ? 1 : 0));
  TopK top(k);
  const double* q = query.data();
  constexpr std::size_t kBlock = 8;
  std::size_t i = 0;
  // Eight rows at a time: independent accumulators, each summed in dimension order.
  for (; i + kBlock <= n_; i += kBlock) {
    double acc[kBlock] = {};
    const float* base = data_ + i * d_;
    for (std::size_t j = 0; j < d_; ++j) {
      for (std::size_t r = 0; r < kBlock; ++r) {
        const double diff = q[j] - static_cast<double>(base[r * d_ + j]);
        acc[r] += diff * diff;
      }
    }
    for (std::size_t r = 0; r < kBlock; ++r) {
      if (has_exclude && i + r == *exclude) continue;
      top.offer(acc[r], i + r);
    }
  }
  for (; i < n_; ++i) {
    if (has_exclude && i == *exclude) continue;
    top.offer(squared_distance(query, i), i);
  }
  return top.finish();
}

NeighborSet KnnIndex::search(const Vector& query, std::size_t k,
                             std::optional<std::size_t> exclude) const {
  return search(std::span<const double>(query.data(), static_cast<std::size_t>(query.size())), k,
                exclude);
}

NeighborSet KnnIndex::search_row(std::size_t row, std::size_t k, bool exclude_self) const {
  if (row >= n_) throw DataError("query row " + std::to_string(row) + " out of range");
  std::vector<double> q(d_);
  for (std::size_t j = 0; j < d_; ++j) q[j] = data_[row * d_ + j];
  auto out = search(q, k, exclude_self ? std::optional<std::size_t>(row) : std::nullopt);
  out.query_row = row;
  return out;
}

std::vector<NeighborSet> KnnIndex::search_rows(std::span<const std::size_t> rows, std::size_t k,
                                               bool exclude_self, int threads) const {
  std::vector<NeighborSet> out(rows.size());
  parallel_for(rows.size(), threads,
               [&](std::size_t i) { out[i] = search_row(rows[i], k, exclude_self); });
  return out;
}

NeighborSet naive_knn(const EmbeddingDataset& ds, std::span<const double> query, std::size_t k,
                      std::optional<std::size_t> exclude) {
  std::vector<Candidate> all;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (exclude && *exclude == i) continue;
    double acc = 0.0;
    const auto row = ds.row(i);
    for (std::size_t j = 0; j < ds.dims(); ++j) {
      const double diff = query[j] - static_cast<double>(row[j]);
      acc += diff * diff;
    }
    all.emplace_back(acc, i);
  }
  if (k < 1 || k > all.size()) throw DataError("k out of range");
  std::sort(all.begin(), all.end());
  NeighborSet out;
  for (std::size_t r = 0; r < k; ++r) {
    out.indices.push_back(all[r].second);
    out.distances.push_back(std::sqrt(all[r].first));
  }
  return out;
}

}  // namespace embgeo
