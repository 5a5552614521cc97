#include "etcdet/catalog.hpp"

#include "etcdet/io.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdio>

namespace etc {

namespace {

constexpr const char* kCatalogFile = "frames.json";

std::filesystem::path grid_path(FieldKind kind, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.etcg", index);
  std::string dir = to_string(kind);
  for (auto& c : dir) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return std::filesystem::path("grids") / dir / name;
}

}  // namespace

FrameCatalog::FrameCatalog(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {}

FrameCatalog FrameCatalog::load(const std::filesystem::path& data_dir) {
  FrameCatalog cat(data_dir);
  const auto path = data_dir / kCatalogFile;
  if (!std::filesystem::exists(path)) return cat;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
    for (const auto& f : j.at("frames")) {
      FrameRecord r;
      r.index = f.at("index").get<int>();
      r.timestamp = f.at("timestamp").get<std::int64_t>();
      if (f.contains("ttr")) r.ttr = f.at("ttr").get<std::string>();
      if (f.contains("mslp")) r.mslp = f.at("mslp").get<std::string>();
      if (r.index != static_cast<int>(cat.frames_.size())) {
        throw IoError("frame indices must be dense and ordered");
      }
      cat.frames_.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return cat;
}

void FrameCatalog::save() const {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& r : frames_) {
    nlohmann::json f{{"index", r.index}, {"timestamp", r.timestamp}, {"time", iso8601_utc(r.timestamp)}};
    if (r.ttr) f["ttr"] = r.ttr->generic_string();
    if (r.mslp) f["mslp"] = r.mslp->generic_string();
    frames.push_back(std::move(f));
  }
  write_file_atomic(dir_ / kCatalogFile, nlohmann::json{{"frames", frames}}.dump(2) + "\n");
}

const FrameRecord& FrameCatalog::frame(int index) const {
  if (!contains(index)) throw IoError("no frame " + std::to_string(index) + " in the catalog");
  return frames_[static_cast<std::size_t>(index)];
}

int FrameCatalog::add(const GeoGrid& grid) {
  int index = 0;
  if (!frames_.empty()) {
    const std::int64_t offset = grid.timestamp() - frames_.front().timestamp;
    if (offset < 0 || offset % kFrameStepSeconds != 0 ||
        offset / kFrameStepSeconds > static_cast<std::int64_t>(frames_.size())) {
      throw GridError(GridErrorCode::SeriesCadence, "timestamp",
                      "timestamp " + std::to_string(grid.timestamp()) +
                          " does not continue the six-hour frame sequence");
    }
    index = static_cast<int>(offset / kFrameStepSeconds);
  }
  if (static_cast<std::size_t>(index) == frames_.size()) {
    frames_.push_back({index, grid.timestamp(), std::nullopt, std::nullopt});
  }
  auto& rec = frames_[static_cast<std::size_t>(index)];
  const auto rel = grid_path(grid.kind(), index);
  save_grid(grid, dir_ / rel);
  if (grid.kind() == FieldKind::TTR) rec.ttr = rel;
  if (grid.kind() == FieldKind::MSLP) rec.mslp = rel;
  return index;
}

GeoGrid FrameCatalog::load_field(int index, FieldKind kind) const {
  const auto& rec = frame(index);
  const auto& rel = kind == FieldKind::TTR ? rec.ttr : kind == FieldKind::MSLP ? rec.mslp : std::nullopt;
  if (!rel) {
    throw GridError(GridErrorCode::Io, "kind",
                    "frame " + std::to_string(index) + " has no " + to_string(kind) + " grid");
  }
  return load_grid(dir_ / *rel, kind);
}

FrameSeries FrameCatalog::mslp_series() const {
  FrameSeries series;
  for (const auto& r : frames_) series.frames.push_back(load_field(r.index, FieldKind::MSLP));
  series.validate();
  return series;
}

}  // namespace etc
