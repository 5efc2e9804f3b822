#pragma once

#include "embgeo/common.hpp"

namespace embgeo {

/// One agglomeration step; cluster ids follow the scipy convention
/// (leaves 0..n-1, the merge at step s creates id n+s).
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0.0;
  std::size_t size = 0;
};

/// Ward linkage on a symmetric distance matrix via the Lance-Williams update.
std::vector<Merge> ward_linkage(const Matrix& dist);

/// Flat labels for k clusters, numbered by first appearance in leaf order.
std::vector<int> cut_tree(const std::vector<Merge>& merges, std::size_t n, std::size_t k);

/// Mean silhouette on a precomputed distance; singletons score 0.
double silhouette_score(const Matrix& dist, const std::vector<int>& labels);

struct ClusterSweep {
  std::vector<std::size_t> ks;
  std::vector<std::vector<int>> labels;
  std::vector<double> silhouette;
  std::size_t best_k = 0;
  double best_score = 0.0;
};

/// Ward clustering of dimensions on 1 - |corr|; best k is the first argmax.
ClusterSweep cluster_dimensions(const Matrix& corr, std::size_t k_min = 2, std::size_t k_max = 30);

}  // namespace embgeo
