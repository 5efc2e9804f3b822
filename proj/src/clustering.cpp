#include "embgeo/clustering.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace embgeo {

std::vector<Merge> ward_linkage(const Matrix& dist) {
  const auto n = static_cast<std::size_t>(dist.rows());
  if (dist.rows() != dist.cols()) throw DataError("distance matrix must be square");
  if (n < 2) return {};
  Matrix d = dist;
  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1), id(n);
  std::iota(id.begin(), id.end(), 0);
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double v = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = static_cast<double>(size[bi]);
    const double nj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const auto ek = static_cast<Eigen::Index>(k);
      const double nk = static_cast<double>(size[k]);
      const double dik = d(static_cast<Eigen::Index>(bi), ek);
      const double djk = d(static_cast<Eigen::Index>(bj), ek);
      const double v = std::sqrt(std::max(
          0.0, ((ni + nk) * dik * dik + (nj + nk) * djk * djk - nk * best * best) / (ni + nj + nk)));
      d(static_cast<Eigen::Index>(bi), ek) = v;
      d(ek, static_cast<Eigen::Index>(bi)) = v;
    }
    merges.push_back({std::min(id[bi], id[bj]), std::max(id[bi], id[bj]), best, size[bi] + size[bj]});
    active[bj] = false;
    size[bi] += size[bj];
    id[bi] = n + step;
  }
  return merges;
}

std::vector<int> cut_tree(const std::vector<Merge>& merges, std::size_t n, std::size_t k) {
  if (k < 1 || k > n) throw ConfigError("cluster count out of range");
  // Union-find over the first n - k merges.
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s + k < n; ++s) {
    parent[find(merges[s].a)] = n + s;
    parent[find(merges[s].b)] = n + s;
  }
  std::vector<int> labels(n, -1);
  std::vector<std::pair<std::size_t, int>> seen;
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& p) { return p.first == root; });
    if (it == seen.end()) {
      seen.emplace_back(root, next);
      labels[i] = next++;
    } else {
      labels[i] = it->second;
    }
  }
  return labels;
}

double silhouette_score(const Matrix& dist, const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(dist.rows()) != n) throw DataError("labels/distance size mismatch");
  if (n == 0) return 0.0;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++count[static_cast<std::size_t>(l)];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    if (count[own] <= 1) continue;
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[static_cast<std::size_t>(labels[j])] += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const double a = sums[own] / static_cast<double>(count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own && count[c] > 0) b = std::min(b, sums[c] / static_cast<double>(count[c]));
    }
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

ClusterSweep cluster_dimensions(const Matrix& corr, std::size_t k_min, std::size_t k_max) {
  const auto d = static_cast<std::size_t>(corr.rows());
  if (corr.rows() != corr.cols()) throw DataError("correlation matrix must be square");
  if (d < 3 || k_min < 2 || k_max > d - 1 || k_min > k_max) {
    throw ConfigError("k_range must lie within [2, D-1] = [2, " + std::to_string(d < 1 ? 0 : d - 1) + "]");
  }
  Matrix dist = (1.0 - corr.array().abs()).matrix();
  dist.diagonal().setZero();
  const auto merges = ward_linkage(dist);
  ClusterSweep out;
  out.best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    auto labels = cut_tree(merges, d, k);
    const double s = silhouette_score(dist, labels);
    out.ks.push_back(k);
    out.labels.push_back(std::move(labels));
    out.silhouette.push_back(s);
    if (s > out.best_score) {
      out.best_score = s;
      out.best_k = k;
    }
  }
  return out;
}

}  // namespace embgeo
