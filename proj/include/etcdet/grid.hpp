#pragma once

#include "etcdet/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace etc {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr std::int64_t kFrameStepSeconds = 21600;

enum class FieldKind : std::uint8_t { TTR = 0, MSLP = 1, Vorticity = 2 };

std::string to_string(FieldKind kind);

/// Geographic point; longitude kept in [0, 360).
struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  static LatLon normalized(double lat, double lon);
  bool operator==(const LatLon&) const = default;
};

/// Great-circle distance on a sphere of radius kEarthRadiusKm (haversine form).
double haversine_km(const LatLon& a, const LatLon& b);

/// Great-circle central angle in degrees, in [0, 180].
double angular_separation_deg(const LatLon& a, const LatLon& b);

/// Regular global lat-lon lattice. Rows run north to south, columns west to east.
struct GridGeometry {
  int n_lon = 1440;
  int n_lat = 721;
  double lat0 = 90.0;
  double d_lat = -0.25;
  double lon0 = 0.0;
  double d_lon = 0.25;

  /// Periodic in longitude, pole to pole in latitude.
  bool valid() const;
  std::size_t size() const { return static_cast<std::size_t>(n_lon) * n_lat; }

  double lat_of(int i_lat) const { return lat0 + i_lat * d_lat; }
  double lon_of(int i_lon) const;
  LatLon cell_center(int i_lat, int i_lon) const { return {lat_of(i_lat), lon_of(i_lon)}; }
  int wrap_lon(int i_lon) const { return ((i_lon % n_lon) + n_lon) % n_lon; }

  /// Nearest cell to a point (latitude clamped to the lattice).
  int nearest_lat_index(double lat) const;
  int nearest_lon_index(double lon) const;

  /// Normalized image coordinates of a point in render_image's layout. Pixel
  /// centers sit at half-integers: x = (column + 0.5) / n_lon, y = (row + 0.5) / n_lat,
  /// with fractional column/row for points between cells. Longitude is used as
  /// given (no wrap), so callers can detect overflow past either image edge.
  double image_x(double lon) const;
  double image_y(double lat) const;

  bool operator==(const GridGeometry&) const = default;

  static GridGeometry global(int n_lon, int n_lat);
};

using FieldValues = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One global scalar field at one timestamp. Immutable after construction.
class GeoGrid {
 public:
  /// Throws GridError if the geometry or values break the invariants.
  GeoGrid(GridGeometry geometry, FieldKind kind, std::int64_t timestamp, FieldValues values);

  const GridGeometry& geometry() const { return geometry_; }
  FieldKind kind() const { return kind_; }
  std::int64_t timestamp() const { return timestamp_; }
  const FieldValues& values() const { return values_; }

  /// Longitude index wraps; latitude index must be in range.
  double at(int i_lat, int i_lon) const { return values_(i_lat, geometry_.wrap_lon(i_lon)); }

 private:
  GridGeometry geometry_;
  FieldKind kind_;
  std::int64_t timestamp_;
  FieldValues values_;
};

/// Consecutive frames of one field, six hours apart.
struct FrameSeries {
  std::vector<GeoGrid> frames;
  std::int64_t step_seconds = kFrameStepSeconds;

  /// Throws GridError on uneven cadence or mixed geometry/kind.
  void validate() const;
};

enum class GridErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  BadKind,
  KindMismatch,
  TruncatedHeader,
  TruncatedPayload,
  InvalidGeometry,
  NonFinite,
  SeriesCadence,
  SeriesMismatch,
};

class GridError : public std::runtime_error {
 public:
  GridError(GridErrorCode code, std::string field, const std::string& message)
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}
  GridErrorCode code() const { return code_; }
  const std::string& field() const { return field_; }

 private:
  GridErrorCode code_;
  std::string field_;
};

/// ETCG container: header then n_lon*n_lat little-endian f32, north row first.
std::vector<std::uint8_t> encode_grid(const GeoGrid& grid);
/// With no expected kind, any kind in the header is accepted.
GeoGrid decode_grid(std::span<const std::uint8_t> bytes, std::optional<FieldKind> expected_kind);

void save_grid(const GeoGrid& grid, const std::filesystem::path& path);
GeoGrid load_grid(const std::filesystem::path& path, std::optional<FieldKind> expected_kind);

/// Per-frame min-max normalization to [0, 255]; constant fields render black.
Gray8 render_image(const GeoGrid& grid);

}  // namespace etc
