#include "etcdet/box.hpp"

namespace etc {

std::string_view to_string(StageClass s) {
  switch (s) {
    case StageClass::Developing: return "developing";
    case StageClass::Mature: return "mature";
    case StageClass::Declining: return "declining";
  }
  return "unknown";
}

std::optional<StageClass> parse_stage(std::string_view name) {
  if (name == "developing") return StageClass::Developing;
  if (name == "mature") return StageClass::Mature;
  if (name == "declining") return StageClass::Declining;
  return std::nullopt;
}

bool BoundingBox::valid() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return xmin < xmax && ymin < ymax && in_unit(xmin) && in_unit(xmax) && in_unit(ymin) &&
         in_unit(ymax);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BoundingBox clip_unit(const BoundingBox& b) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(b.xmin), c(b.ymin), c(b.xmax), c(b.ymax)};
}

}  // namespace etc
