#pragma once

#include "etcdet/box.hpp"
#include "etcdet/detector/priors.hpp"

#include <Eigen/Core>

#include <array>
#include <stdexcept>
#include <vector>

namespace etc::detector {

/// Center-size variances of the offset encoding.
inline constexpr std::array<double, 4> kVariances{0.1, 0.1, 0.2, 0.2};

using Offsets = std::array<double, 4>;

/// t = ((cx_g - cx_p) / (0.1 w_p), (cy_g - cy_p) / (0.1 h_p), log(w_g / w_p) / 0.2,
/// log(h_g / h_p) / 0.2). Throws std::invalid_argument for a box with
/// non-positive width or height.
Offsets encode(const BoundingBox& gt, const PriorBox& prior);
BoundingBox decode(const Offsets& t, const PriorBox& prior);

/// Prior-to-ground-truth assignment for one image.
struct MatchAssignment {
  /// Index of the matched ground truth per prior, -1 for background.
  std::vector<int> matched_gt;
  /// 0 for background, 1 + stage code otherwise.
  std::vector<int> labels;
  /// Encoded regression targets; zero rows for background priors.
  Eigen::Matrix<double, Eigen::Dynamic, 4> targets;
  int num_positive = 0;

  std::size_t size() const { return labels.size(); }
};

/// Each ground truth first claims its highest-IoU prior (lower prior index on
/// ties, skipping priors already claimed by a lower-index ground truth); every
/// other prior whose best IoU exceeds `iou_threshold` joins its best ground
/// truth (lower gt index on ties). The rest are background.
MatchAssignment match_priors(const std::vector<PriorBox>& priors,
                             const std::vector<LabeledBox>& gts, double iou_threshold = 0.5);

}  // namespace etc::detector
