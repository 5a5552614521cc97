#pragma once

#include "etcdet/grid.hpp"

#include <compare>
#include <iosfwd>
#include <string>
#include <vector>

namespace etc {

struct GridCell {
  int i_lat = 0;
  int i_lon = 0;
  auto operator<=>(const GridCell&) const = default;
};

/// A strict 8-neighbor MSLP minimum on one frame.
struct CycloneCenter {
  int frame_index = 0;
  GridCell cell;
  LatLon position;
  double mslp = 0.0;
  /// South of the tropical flag latitude; experts decide whether to drop it.
  bool possibly_tropical = false;
};

enum class Hemisphere { North };

struct TrackerConfig {
  double max_step_km = 333.36;
  int min_frames = 4;
  double neighbor_min_deg = 10.0;
  Hemisphere hemisphere = Hemisphere::North;
  double tropical_flag_lat = 25.0;

  /// Throws std::invalid_argument unless every knob is strictly positive.
  void validate() const;
};

struct Track {
  std::string id;
  std::vector<CycloneCenter> centers;

  int length() const { return static_cast<int>(centers.size()); }
  double duration_hours() const;
};

/// Every interior cell strictly below its 8 neighbors (longitude wraps, pole
/// rows skipped), restricted to the configured hemisphere. Candidates closer
/// than neighbor_min_deg are grouped by single linkage and only the deepest
/// of each group is kept. Output is ordered by (i_lat, i_lon).
std::vector<CycloneCenter> find_local_minima(const GeoGrid& mslp, const TrackerConfig& cfg,
                                             int frame_index = 0);

/// Links per-frame centers into disjoint tracks by depth-first search over the
/// frame-layered graph whose edges join adjacent-frame centers at most
/// max_step_km apart. From each unused center (earliest frame first) the search
/// follows the longest admissible chain; among equally long chains it prefers
/// the nearest successor, then lower MSLP, then lower longitude index. Chains
/// shorter than min_frames are discarded and their centers stay available.
std::vector<Track> link_tracks(const std::vector<std::vector<CycloneCenter>>& per_frame_centers,
                               const TrackerConfig& cfg);

struct TrackSpan {
  std::string id;
  int first_frame = 0;
  int last_frame = 0;
  double duration_hours = 0.0;
};

struct TrackStats {
  std::size_t count = 0;
  double min_hours = 0.0;
  double max_hours = 0.0;
  double mean_hours = 0.0;
  std::vector<TrackSpan> tracks;
};

TrackStats track_report(const std::vector<Track>& tracks);

/// One JSON object per line: id, frames, lat, lon, mslp, duration_hours.
void write_tracks_jsonl(std::ostream& out, const std::vector<Track>& tracks);
std::string tracks_to_jsonl(const std::vector<Track>& tracks);

}  // namespace etc
