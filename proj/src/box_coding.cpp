#include "etcdet/detector/box_coding.hpp"

#include <cmath>

namespace etc::detector {

Offsets encode(const BoundingBox& gt, const PriorBox& prior) {
  if (!(gt.width() > 0.0) || !(gt.height() > 0.0)) {
    throw std::invalid_argument("encode: ground-truth box must have positive width and height");
  }
  return {(gt.cx() - prior.cx) / (prior.w * kVariances[0]),
          (gt.cy() - prior.cy) / (prior.h * kVariances[1]),
          std::log(gt.width() / prior.w) / kVariances[2],
          std::log(gt.height() / prior.h) / kVariances[3]};
}

BoundingBox decode(const Offsets& t, const PriorBox& prior) {
  const double cx = prior.cx + t[0] * kVariances[0] * prior.w;
  const double cy = prior.cy + t[1] * kVariances[1] * prior.h;
  const double w = prior.w * std::exp(t[2] * kVariances[2]);
  const double h = prior.h * std::exp(t[3] * kVariances[3]);
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

MatchAssignment match_priors(const std::vector<PriorBox>& priors,
                             const std::vector<LabeledBox>& gts, double iou_threshold) {
  if (priors.empty()) throw std::invalid_argument("match_priors: no priors");
  const std::size_t P = priors.size();
  const std::size_t G = gts.size();
  MatchAssignment m;
  m.matched_gt.assign(P, -1);
  m.labels.assign(P, 0);
  m.targets = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(static_cast<Eigen::Index>(P), 4);
  if (G == 0) return m;

  Eigen::MatrixXd overlap(P, G);
  for (std::size_t p = 0; p < P; ++p) {
    const auto pc = priors[p].corners();
    for (std::size_t g = 0; g < G; ++g) overlap(p, g) = iou(pc, gts[g].box);
  }

  for (std::size_t p = 0; p < P; ++p) {
    Eigen::Index best_g;
    const double best = overlap.row(static_cast<Eigen::Index>(p)).maxCoeff(&best_g);
    if (best > iou_threshold) m.matched_gt[p] = static_cast<int>(best_g);
  }

  std::vector<bool> claimed(P, false);
  for (std::size_t g = 0; g < G; ++g) {
    std::ptrdiff_t best_p = -1;
    double best = -1.0;
    for (std::size_t p = 0; p < P; ++p) {
      if (claimed[p]) continue;
      if (overlap(p, g) > best) {
        best = overlap(p, g);
        best_p = static_cast<std::ptrdiff_t>(p);
      }
    }
    if (best_p < 0) continue;  // more ground truths than priors
    claimed[static_cast<std::size_t>(best_p)] = true;
    m.matched_gt[static_cast<std::size_t>(best_p)] = static_cast<int>(g);
  }

  for (std::size_t p = 0; p < P; ++p) {
    const int g = m.matched_gt[p];
    if (g < 0) continue;
    m.labels[p] = 1 + static_cast<int>(gts[static_cast<std::size_t>(g)].stage);
    const auto t = encode(gts[static_cast<std::size_t>(g)].box, priors[p]);
    for (int k = 0; k < 4; ++k) m.targets(static_cast<Eigen::Index>(p), k) = t[k];
    ++m.num_positive;
  }
  return m;
}

}  // namespace etc::detector
