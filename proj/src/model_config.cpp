#include "etcdet/detector/model.hpp"

namespace etc::detector {

std::vector<int> ModelConfig::feature_sizes() const {
  std::vector<int> sizes;
  int s = input_size;
  for (const auto& c : backbone) {
    s = conv_out_size(s, c);
    sizes.push_back(s);
  }
  return sizes;
}

void ModelConfig::validate() const {
  priors.validate();
  if (input_size <= 0 || backbone.empty() || num_classes <= 0) {
    throw std::invalid_argument("model config: empty architecture");
  }
  for (const auto& c : backbone) {
    if (c.out_channels <= 0 || c.kernel <= 0 || c.stride <= 0 || c.pad < 0) {
      throw std::invalid_argument("model config: bad conv block");
    }
  }
  if (head_kernel <= 0 || head_kernel % 2 == 0) {
    throw std::invalid_argument("model config: head kernel must be odd");
  }
  const auto sizes = feature_sizes();
  for (int s : sizes) {
    if (s <= 0) throw std::invalid_argument("model config: feature map vanishes");
  }
  if (head_sources.size() != priors.feature_map_sizes.size()) {
    throw std::invalid_argument("model config: one head per prior feature map required");
  }
  for (std::size_t h = 0; h < head_sources.size(); ++h) {
    const int src = head_sources[h];
    if (src < 0 || src >= static_cast<int>(sizes.size())) {
      throw std::invalid_argument("model config: head source out of range");
    }
    if (sizes[static_cast<std::size_t>(src)] != priors.feature_map_sizes[h]) {
      throw std::invalid_argument("model config: head " + std::to_string(h) + " sees a " +
                                  std::to_string(sizes[static_cast<std::size_t>(src)]) +
                                  " map but priors expect " +
                                  std::to_string(priors.feature_map_sizes[h]));
    }
  }
}

ModelConfig ModelConfig::reduced() {
  ModelConfig c;
  c.input_size = 24;
  c.backbone = {{4, 3, 2, 1}, {6, 3, 2, 1}, {8, 3, 2, 1}};
  c.head_sources = {1, 2};
  c.priors.feature_map_sizes = {6, 3};
  c.priors.scales = {0.3, 0.6};
  return c;
}

}  // namespace etc::detector
