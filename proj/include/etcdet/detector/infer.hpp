#pragma once

#include "etcdet/box.hpp"
#include "etcdet/detector/box_coding.hpp"
#include "etcdet/detector/model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace etc::detector {

struct Detection {
  BoundingBox box;
  StageClass stage = StageClass::Developing;
  double score = 0.0;
};

struct InferConfig {
  double score_threshold = 0.5;
  double nms_iou = 0.45;
  int top_k = 200;
};

/// Greedy per-class suppression: within each class, a box is dropped when it
/// overlaps an already kept, higher-scored box by IoU > iou_threshold. Output is
/// sorted by descending score and capped at top_k.
std::vector<Detection> nms(std::vector<Detection> candidates, double iou_threshold, int top_k);

/// Softmax, threshold and decode for one image's head rows, then NMS.
template <class S>
std::vector<Detection> decode_detections(const Eigen::Ref<const Mat<S>>& offsets,
                                         const Eigen::Ref<const Mat<S>>& logits,
                                         const std::vector<PriorBox>& priors,
                                         const InferConfig& cfg) {
  std::vector<Detection> candidates;
  const Eigen::Index K = logits.cols();
  for (Eigen::Index p = 0; p < offsets.rows(); ++p) {
    const double m = static_cast<double>(logits.row(p).maxCoeff());
    double denom = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) denom += std::exp(static_cast<double>(logits(p, k)) - m);
    BoundingBox decoded;
    bool have_box = false;
    for (Eigen::Index k = 1; k < K; ++k) {
      const double score = std::exp(static_cast<double>(logits(p, k)) - m) / denom;
      if (!(score > cfg.score_threshold)) continue;
      if (!have_box) {
        decoded = clip_unit(decode({static_cast<double>(offsets(p, 0)), static_cast<double>(offsets(p, 1)),
                                    static_cast<double>(offsets(p, 2)), static_cast<double>(offsets(p, 3))},
                                   priors[static_cast<std::size_t>(p)]));
        have_box = true;
      }
      if (!decoded.valid()) break;
      candidates.push_back({decoded, static_cast<StageClass>(k - 1), score});
    }
  }
  return nms(std::move(candidates), cfg.nms_iou, cfg.top_k);
}

/// Detections for each image of a batch of input_size x input_size images.
template <class S>
std::vector<std::vector<Detection>> infer_batch(const MiniSSD<S>& model,
                                                const std::vector<PriorBox>& priors,
                                                std::span<const ImageF* const> images,
                                                const InferConfig& cfg = {}) {
  const int batch = static_cast<int>(images.size());
  const auto out = model.forward(model.pack(images), batch);
  const Eigen::Index P = model.num_priors();
  std::vector<std::vector<Detection>> result;
  result.reserve(images.size());
  for (int b = 0; b < batch; ++b) {
    result.push_back(decode_detections<S>(out.offsets.middleRows(b * P, P),
                                          out.logits.middleRows(b * P, P), priors, cfg));
  }
  return result;
}

template <class S>
std::vector<Detection> infer(const MiniSSD<S>& model, const std::vector<PriorBox>& priors,
                             const ImageF& image, const InferConfig& cfg = {}) {
  const ImageF* one[] = {&image};
  return infer_batch(model, priors, std::span<const ImageF* const>(one, 1), cfg).front();
}

}  // namespace etc::detector
