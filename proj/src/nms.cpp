#include "etcdet/detector/infer.hpp"

#include <numeric>

namespace etc::detector {

std::vector<Detection> nms(std::vector<Detection> candidates, double iou_threshold, int top_k) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : candidates) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.stage == d.stage && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
    if (top_k > 0 && static_cast<int>(kept.size()) >= top_k) break;
  }
  return kept;
}

}  // namespace etc::detector
