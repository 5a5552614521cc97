#include "etcdet/grid.hpp"

#include "etcdet/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace etc {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'C', 'G'};
constexpr std::uint16_t kFormatVersion = 1;
// magic + version + kind + n_lon + n_lat + 4 f64 + i64
constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 4 + 4 + 4 * 8 + 8;

static_assert(std::endian::native == std::endian::little,
              "ETCG codec assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

double central_angle_rad(const LatLon& a, const LatLon& b) {
  const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat);
  const double dp = p2 - p1;
  const double dl = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dp / 2), s2 = std::sin(dl / 2);
  const double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

std::string to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::TTR: return "TTR";
    case FieldKind::MSLP: return "MSLP";
    case FieldKind::Vorticity: return "Vorticity";
  }
  return "unknown";
}

LatLon LatLon::normalized(double lat, double lon) {
  double l = std::fmod(lon, 360.0);
  if (l < 0) l += 360.0;
  if (l >= 360.0) l = 0.0;
  return {std::clamp(lat, -90.0, 90.0), l};
}

double haversine_km(const LatLon& a, const LatLon& b) {
  return kEarthRadiusKm * central_angle_rad(a, b);
}

// The neighbor rule is a great-circle angle, not a per-axis degree difference.
double angular_separation_deg(const LatLon& a, const LatLon& b) {
  return rad2deg(central_angle_rad(a, b));
}

bool GridGeometry::valid() const {
  if (n_lon <= 0 || n_lat < 2) return false;
  if (!std::isfinite(lat0) || !std::isfinite(d_lat) || !std::isfinite(lon0) ||
      !std::isfinite(d_lon)) {
    return false;
  }
  if (d_lon <= 0 || d_lat >= 0) return false;
  return close(n_lon * std::abs(d_lon), 360.0) && close(lat0 + (n_lat - 1) * d_lat, -lat0) &&
         close(std::abs(lat0), 90.0);
}

double GridGeometry::lon_of(int i_lon) const {
  return LatLon::normalized(0.0, lon0 + wrap_lon(i_lon) * d_lon).lon;
}

int GridGeometry::nearest_lat_index(double lat) const {
  const int i = static_cast<int>(std::lround((lat - lat0) / d_lat));
  return std::clamp(i, 0, n_lat - 1);
}

int GridGeometry::nearest_lon_index(double lon) const {
  return wrap_lon(static_cast<int>(std::lround((lon - lon0) / d_lon)));
}

double GridGeometry::image_x(double lon) const { return ((lon - lon0) / d_lon + 0.5) / n_lon; }

double GridGeometry::image_y(double lat) const { return ((lat - lat0) / d_lat + 0.5) / n_lat; }

GridGeometry GridGeometry::global(int n_lon, int n_lat) {
  GridGeometry g;
  g.n_lon = n_lon;
  g.n_lat = n_lat;
  g.lat0 = 90.0;
  g.d_lat = -180.0 / (n_lat - 1);
  g.lon0 = 0.0;
  g.d_lon = 360.0 / n_lon;
  return g;
}

GeoGrid::GeoGrid(GridGeometry geometry, FieldKind kind, std::int64_t timestamp,
                 FieldValues values)
    : geometry_(geometry), kind_(kind), timestamp_(timestamp), values_(std::move(values)) {
  if (!geometry_.valid()) {
    throw GridError(GridErrorCode::InvalidGeometry, "geometry",
                    "grid geometry is not a periodic pole-to-pole lattice");
  }
  if (values_.rows() != geometry_.n_lat || values_.cols() != geometry_.n_lon) {
    throw GridError(GridErrorCode::InvalidGeometry, "values",
                    "values shape does not match n_lat x n_lon");
  }
  if (!values_.allFinite()) {
    throw GridError(GridErrorCode::NonFinite, "values", "grid contains non-finite values");
  }
}

void FrameSeries::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto& prev = frames[i - 1];
    const auto& cur = frames[i];
    if (cur.timestamp() - prev.timestamp() != step_seconds) {
      throw GridError(GridErrorCode::SeriesCadence, "timestamp",
                      "frame " + std::to_string(i) + " is not " + std::to_string(step_seconds) +
                          " s after its predecessor");
    }
    if (!(cur.geometry() == prev.geometry()) || cur.kind() != prev.kind()) {
      throw GridError(GridErrorCode::SeriesMismatch, "geometry",
                      "frame " + std::to_string(i) + " differs in geometry or kind");
    }
  }
}

std::vector<std::uint8_t> encode_grid(const GeoGrid& grid) {
  const auto& g = grid.geometry();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + g.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint16_t>(out, kFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(grid.kind()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.n_lon));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.n_lat));
  put<double>(out, g.lat0);
  put<double>(out, g.d_lat);
  put<double>(out, g.lon0);
  put<double>(out, g.d_lon);
  put<std::int64_t>(out, grid.timestamp());
  const auto& v = grid.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) put<float>(out, static_cast<float>(v(r, c)));
  }
  return out;
}

GeoGrid decode_grid(std::span<const std::uint8_t> bytes, std::optional<FieldKind> expected_kind) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw GridError(GridErrorCode::BadMagic, "magic", "missing ETCG magic header");
  }
  if (bytes.size() < kHeaderBytes) {
    throw GridError(GridErrorCode::TruncatedHeader, "header", "header shorter than " +
                                                                  std::to_string(kHeaderBytes) +
                                                                  " bytes");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint16_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw GridError(GridErrorCode::UnsupportedVersion, "version",
                    "unsupported format version " + std::to_string(version));
  }
  const auto kind_code = get<std::uint8_t>(bytes, pos);
  if (kind_code > 2) {
    throw GridError(GridErrorCode::BadKind, "kind", "unknown kind code " +
                                                        std::to_string(kind_code));
  }
  const auto kind = static_cast<FieldKind>(kind_code);
  if (expected_kind && kind != *expected_kind) {
    throw GridError(GridErrorCode::KindMismatch, "kind",
                    "expected " + to_string(*expected_kind) + " grid, file holds " +
                        to_string(kind));
  }
  GridGeometry g;
  g.n_lon = static_cast<int>(get<std::uint32_t>(bytes, pos));
  g.n_lat = static_cast<int>(get<std::uint32_t>(bytes, pos));
  g.lat0 = get<double>(bytes, pos);
  g.d_lat = get<double>(bytes, pos);
  g.lon0 = get<double>(bytes, pos);
  g.d_lon = get<double>(bytes, pos);
  const auto timestamp = get<std::int64_t>(bytes, pos);
  if (!g.valid()) {
    throw GridError(GridErrorCode::InvalidGeometry, "geometry",
                    "header geometry is not a periodic pole-to-pole lattice");
  }
  const std::size_t payload = g.size() * sizeof(float);
  if (bytes.size() - kHeaderBytes < payload) {
    throw GridError(GridErrorCode::TruncatedPayload, "values",
                    "payload shorter than n_lon×n_lat");
  }
  FieldValues values(g.n_lat, g.n_lon);
  for (int r = 0; r < g.n_lat; ++r) {
    for (int c = 0; c < g.n_lon; ++c) {
      const float f = get<float>(bytes, pos);
      if (!std::isfinite(f)) {
        throw GridError(GridErrorCode::NonFinite, "values",
                        "non-finite value at row " + std::to_string(r) + ", column " +
                            std::to_string(c));
      }
      values(r, c) = f;
    }
  }
  return GeoGrid(g, kind, timestamp, std::move(values));
}

void save_grid(const GeoGrid& grid, const std::filesystem::path& path) {
  write_file_atomic(path, encode_grid(grid));
}

GeoGrid load_grid(const std::filesystem::path& path, std::optional<FieldKind> expected_kind) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IoError& e) {
    throw GridError(GridErrorCode::Io, "path", e.what());
  }
  return decode_grid(bytes, expected_kind);
}

Gray8 render_image(const GeoGrid& grid) {
  const auto& v = grid.values();
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) return Gray8::Zero(v.rows(), v.cols());
  return ((v - lo) * (255.0 / (hi - lo))).round().cast<std::uint8_t>();
}

}  // namespace etc
