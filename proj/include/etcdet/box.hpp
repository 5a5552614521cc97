#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace etc {

/// Cyclone life-cycle stage. Integer codes are stable and used on disk.
enum class StageClass : std::uint8_t { Developing = 0, Mature = 1, Declining = 2 };

inline constexpr int kNumStages = 3;

std::string_view to_string(StageClass s);
std::optional<StageClass> parse_stage(std::string_view name);

/// Axis-aligned box in normalized image coordinates, origin top-left.
struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }

  /// xmin < xmax, ymin < ymax, all coordinates in [0, 1].
  bool valid() const;

  bool operator==(const BoundingBox&) const = default;
};

struct LabeledBox {
  BoundingBox box;
  StageClass stage = StageClass::Developing;

  bool operator==(const LabeledBox&) const = default;
};

/// Intersection over union; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

BoundingBox clip_unit(const BoundingBox& b);

}  // namespace etc
