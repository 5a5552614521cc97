#pragma once

#include "etcdet/box.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace etc::testing {

// All-point AP written as a sum over true positives: each TP adds 1/G times
// the best precision at or after its rank.
inline double oracle_ap(const std::vector<bool>& tp_by_rank, std::size_t num_gt) {
  const std::size_t n = tp_by_rank.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += tp_by_rank[k];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!tp_by_rank[k]) continue;
    ap += *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(k), precision.end()) /
          static_cast<double>(num_gt);
  }
  return ap;
}

inline double oracle_ap11(const std::vector<bool>& tp_by_rank, std::size_t num_gt) {
  const std::size_t n = tp_by_rank.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += tp_by_rank[k];
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  double ap = 0.0;
  for (int t = 0; t <= 10; ++t) {
    double p = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (recall[k] >= t / 10.0) p = std::max(p, precision[k]);
    }
    ap += p / 11.0;
  }
  return ap;
}

inline BoundingBox gt_box(int i) { return {0.05 + 0.2 * i, 0.1, 0.2 + 0.2 * i, 0.3}; }
inline BoundingBox far_box(int i) { return {0.05 + 0.1 * i, 0.7, 0.1 + 0.1 * i, 0.9}; }

}  // namespace etc::testing
