#include "etcdet/detector/priors.hpp"

#include <cmath>
#include <stdexcept>

namespace etc::detector {

int PriorConfig::num_priors() const {
  int n = 0;
  for (int s : feature_map_sizes) n += s * s * priors_per_cell();
  return n;
}

void PriorConfig::validate() const {
  if (feature_map_sizes.empty() || feature_map_sizes.size() != scales.size()) {
    throw std::invalid_argument("prior config: feature_map_sizes and scales must align");
  }
  if (aspect_ratios.empty()) throw std::invalid_argument("prior config: no aspect ratios");
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (feature_map_sizes[k] <= 0) throw std::invalid_argument("prior config: map size <= 0");
    if (!(scales[k] > 0.0 && scales[k] <= 1.0)) {
      throw std::invalid_argument("prior config: scales must lie in (0, 1]");
    }
    if (k > 0 && !(scales[k] > scales[k - 1])) {
      throw std::invalid_argument("prior config: scales must increase");
    }
  }
  for (double ar : aspect_ratios) {
    if (!(ar > 0.0)) throw std::invalid_argument("prior config: aspect ratios must be positive");
  }
}

std::vector<PriorBox> generate_priors(const PriorConfig& cfg) {
  cfg.validate();
  std::vector<PriorBox> priors;
  priors.reserve(static_cast<std::size_t>(cfg.num_priors()));
  for (std::size_t k = 0; k < cfg.feature_map_sizes.size(); ++k) {
    const int s = cfg.feature_map_sizes[k];
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < s; ++j) {
        const double cx = (j + 0.5) / s;
        const double cy = (i + 0.5) / s;
        for (double ar : cfg.aspect_ratios) {
          const double r = std::sqrt(ar);
          PriorBox p{cx, cy, cfg.scales[k] * r, cfg.scales[k] / r};
          if (cfg.clip) p = PriorBox::from_corners(clip_unit(p.corners()));
          priors.push_back(p);
        }
      }
    }
  }
  return priors;
}

}  // namespace etc::detector
