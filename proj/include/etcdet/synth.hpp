#pragma once

#include "etcdet/box.hpp"
#include "etcdet/cyclone_track.hpp"
#include "etcdet/grid.hpp"
#include "etcdet/image.hpp"
#include "etcdet/labelstore.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etc {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Gaussian pressure well following a path; absent frames are nullopt.
struct PlantedLow {
  std::vector<std::optional<LatLon>> path;
  double depth = 1000.0;      // Pa below ambient
  double radius_deg = 4.0;    // Gaussian sigma in degrees of arc

  void validate() const;
};

struct MslpSeriesSpec {
  double ambient = 101325.0;
  std::vector<PlantedLow> lows;
  int frames = 1;
  GridGeometry geometry;
  std::uint64_t seed = 0;
  /// Amplitude (Pa) of uniform noise added to every cell; keep well below depth.
  double noise = 0.0;
  std::int64_t start_time = 0;
};

/// ambient - sum depth * exp(-d^2 / 2 sigma^2) per active low, d the angular
/// separation. Contributions beyond 8 sigma are dropped. Warnings report lows
/// closer than 2 sigma in a shared frame (their minima may merge).
FrameSeries gen_mslp_series(const MslpSeriesSpec& spec, std::vector<std::string>* warnings = nullptr);

/// Thermal-radiation stand-in for a pressure frame: deeper lows read as colder,
/// brighter cloud. TTR = -260 + 0.1 (ambient - mslp) W m^-2.
GeoGrid ttr_from_mslp(const GeoGrid& mslp, double ambient = 101325.0);

/// How a planted low relates to the tracking criteria.
enum class PlantKind { Compliant, TooFast, TooShort, TooClose };
std::string_view to_string(PlantKind k);

struct ScenarioLow {
  PlantedLow low;
  PlantKind kind = PlantKind::Compliant;
  /// Grid cell per frame, nullopt where the low is absent.
  std::vector<std::optional<GridCell>> cells;
};

struct TrackScenario {
  MslpSeriesSpec spec;
  std::vector<ScenarioLow> lows;
};

/// Random cell-aligned lows on `geometry`: two to four that satisfy every
/// tracking criterion, plus one of each violation (a step longer than
/// max_step_km splitting the path into pieces shorter than min_frames, a path
/// of min_frames - 1 frames, and a shallower companion closer than
/// neighbor_min_deg to a compliant low).
TrackScenario gen_track_scenario(std::uint64_t seed, const TrackerConfig& cfg, int frames = 10,
                                 const GridGeometry& geometry = GridGeometry::global(360, 181));

struct SynthImageSpec {
  StageClass stage = StageClass::Mature;
  double cx = 0.5;
  double cy = 0.5;
  /// Shape scale as a fraction of the canvas side, in (0, 1].
  double size = 0.12;
  /// Standard deviation of additive Gaussian noise on the [0, 1] intensity scale.
  double noise = 0.03;
  /// Small rotation of the template, degrees.
  double rotation_deg = 0.0;
  std::uint64_t seed = 0;
  int canvas = 300;

  void validate() const;
};

struct SynthImage {
  Gray8 image;
  BoundingBox box;
  StageClass stage = StageClass::Mature;
};

/// Renders one stage-styled cyclone on an otherwise empty canvas.
SynthImage gen_cyclone_image(const SynthImageSpec& spec);

/// Draws the shape's intensity layer (before background and noise) on a
/// canvas x canvas grid and returns it with its box. Throws SynthError when
/// nothing of the shape lands on the canvas.
struct ShapeLayer {
  ImageF layer;
  BoundingBox box;
};
ShapeLayer render_shape(const SynthImageSpec& spec);

/// Canonical shapes (centered, size 0.3, no noise) used by the template classifier.
std::array<ImageF, kNumStages> canonical_templates(int resolution = 32);

/// Nearest-template classifier: crops the box, resamples it to the template
/// resolution and picks the stage with the highest normalized correlation.
StageClass classify_by_template(const Gray8& image, const BoundingBox& box,
                                const std::array<ImageF, kNumStages>& templates);

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<Gray8> images;  // images[i] belongs to manifest.entries[i]
};

struct SynthDatasetOptions {
  int canvas = 300;
  double min_size = 0.08;
  double max_size = 0.16;
  double noise = 0.03;
  double max_pair_iou = 0.2;
  int placement_attempts = 200;
  Split split = Split::Train;
};

/// Box counts per stage are met exactly; frames hold 1 to 3 cyclones whose
/// boxes overlap pairwise by IoU < max_pair_iou. Throws SynthError when a
/// frame cannot be filled within the placement budget.
SynthDataset gen_dataset(const std::array<std::size_t, kNumStages>& counts, std::uint64_t seed,
                         const SynthDatasetOptions& options = {});

}  // namespace etc
