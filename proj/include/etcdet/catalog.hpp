#pragma once

#include "etcdet/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace etc {

/// One time step of the data directory. Paths are relative to the data dir.
struct FrameRecord {
  int index = 0;
  std::int64_t timestamp = 0;
  std::optional<std::filesystem::path> ttr;
  std::optional<std::filesystem::path> mslp;

  bool operator==(const FrameRecord&) const = default;
};

/// frames.json inside a data directory: frames ordered by timestamp, indices
/// dense from 0, one grid file per field and frame under grids/<kind>/.
class FrameCatalog {
 public:
  FrameCatalog() = default;
  explicit FrameCatalog(std::filesystem::path data_dir);

  static FrameCatalog load(const std::filesystem::path& data_dir);
  void save() const;

  const std::filesystem::path& data_dir() const { return dir_; }
  const std::vector<FrameRecord>& frames() const { return frames_; }
  const FrameRecord& frame(int index) const;
  bool contains(int index) const { return index >= 0 && static_cast<std::size_t>(index) < frames_.size(); }

  /// Stores a grid under the catalog, creating or extending the frame at its
  /// timestamp. Timestamps must continue the six-hour cadence.
  int add(const GeoGrid& grid);

  GeoGrid load_field(int index, FieldKind kind) const;
  /// Every MSLP frame as a validated series.
  FrameSeries mslp_series() const;

 private:
  std::filesystem::path dir_;
  std::vector<FrameRecord> frames_;
};

}  // namespace etc
