#pragma once

#include "etcdet/box.hpp"

#include <vector>

namespace etc::detector {

/// Prior (anchor) template in normalized center-size form.
struct PriorBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  BoundingBox corners() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
  static PriorBox from_corners(const BoundingBox& b) {
    return {b.cx(), b.cy(), b.width(), b.height()};
  }
};

struct PriorConfig {
  std::vector<int> feature_map_sizes{18, 9, 5, 3};
  std::vector<double> scales{0.15, 0.35, 0.55, 0.75};
  /// Shared by every feature map.
  std::vector<double> aspect_ratios{1.0, 2.0, 0.5};
  bool clip = true;

  int priors_per_cell() const { return static_cast<int>(aspect_ratios.size()); }
  int num_priors() const;
  /// Throws std::invalid_argument on misaligned lists or non-increasing scales.
  void validate() const;
};

/// Map-major, row-major, ratio-minor. For an s x s map the cell (i, j) centers
/// at ((j + 0.5) / s, (i + 0.5) / s); w = scale * sqrt(ar), h = scale / sqrt(ar).
std::vector<PriorBox> generate_priors(const PriorConfig& cfg);

}  // namespace etc::detector
