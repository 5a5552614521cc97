#include "etcdet/synth.hpp"

#include "etcdet/augment.hpp"
#include "etcdet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace etc {

void PlantedLow::validate() const {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw SynthError("planted low depth must be positive");
  if (!(radius_deg > 0.0) || !std::isfinite(radius_deg)) {
    throw SynthError("planted low radius must be positive");
  }
  for (const auto& p : path) {
    if (p && (!std::isfinite(p->lat) || !std::isfinite(p->lon) || std::abs(p->lat) > 90.0)) {
      throw SynthError("planted low path has a non-finite or out-of-range position");
    }
  }
}

FrameSeries gen_mslp_series(const MslpSeriesSpec& spec, std::vector<std::string>* warnings) {
  if (spec.frames < 1) throw SynthError("series needs at least one frame");
  if (!spec.geometry.valid()) throw SynthError("series geometry is not a valid global grid");
  if (!std::isfinite(spec.ambient) || !(spec.noise >= 0.0)) {
    throw SynthError("ambient must be finite and noise non-negative");
  }
  for (const auto& low : spec.lows) low.validate();

  const auto& g = spec.geometry;
  Rng rng(spec.seed);
  FrameSeries series;
  for (int f = 0; f < spec.frames; ++f) {
    FieldValues values = FieldValues::Constant(g.n_lat, g.n_lon, spec.ambient);
    std::vector<const PlantedLow*> active;
    std::vector<LatLon> where;
    for (const auto& low : spec.lows) {
      if (static_cast<std::size_t>(f) >= low.path.size() || !low.path[static_cast<std::size_t>(f)]) continue;
      const LatLon c = LatLon::normalized(low.path[static_cast<std::size_t>(f)]->lat,
                                          low.path[static_cast<std::size_t>(f)]->lon);
      active.push_back(&low);
      where.push_back(c);
      const double sigma = low.radius_deg;
      const double cutoff = 8.0 * sigma;
      for (int i = 0; i < g.n_lat; ++i) {
        if (std::abs(g.lat_of(i) - c.lat) > cutoff) continue;
        for (int j = 0; j < g.n_lon; ++j) {
          const double d = angular_separation_deg(g.cell_center(i, j), c);
          if (d > cutoff) continue;
          values(i, j) -= low.depth * std::exp(-d * d / (2.0 * sigma * sigma));
        }
      }
    }
    if (warnings) {
      for (std::size_t a = 0; a < active.size(); ++a) {
        for (std::size_t b = a + 1; b < active.size(); ++b) {
          const double sep = angular_separation_deg(where[a], where[b]);
          const double limit = 2.0 * std::max(active[a]->radius_deg, active[b]->radius_deg);
          if (sep < limit) {
            std::ostringstream msg;
            msg << "frame " << f << ": lows " << a << " and " << b << " are " << sep
                << " deg apart, under 2 sigma; their minima may merge";
            warnings->push_back(msg.str());
          }
        }
      }
    }
    if (spec.noise > 0.0) {
      for (Eigen::Index k = 0; k < values.size(); ++k) {
        values.data()[k] += uniform(rng, -spec.noise, spec.noise);
      }
    }
    series.frames.emplace_back(g, FieldKind::MSLP, spec.start_time + f * kFrameStepSeconds,
                               std::move(values));
  }
  return series;
}

GeoGrid ttr_from_mslp(const GeoGrid& mslp, double ambient) {
  FieldValues v = -260.0 + 0.1 * (ambient - mslp.values());
  return GeoGrid(mslp.geometry(), FieldKind::TTR, mslp.timestamp(), std::move(v));
}

std::string_view to_string(PlantKind k) {
  switch (k) {
    case PlantKind::Compliant: return "compliant";
    case PlantKind::TooFast: return "too_fast";
    case PlantKind::TooShort: return "too_short";
    case PlantKind::TooClose: return "too_close";
  }
  return "unknown";
}

namespace {

using CellPath = std::vector<std::optional<GridCell>>;

class ScenarioBuilder {
 public:
  ScenarioBuilder(std::uint64_t seed, const TrackerConfig& cfg, int frames, const GridGeometry& g)
      : rng_(seed), cfg_(cfg), frames_(frames), g_(g) {}

  LatLon pos(GridCell c) const { return g_.cell_center(c.i_lat, c.i_lon); }

  /// Random walk of `len` cells from frame `start`. With `jump_after` set, the
  /// step leaving that path index exceeds max_step_km.
  CellPath walk(int start, int len, std::optional<int> jump_after) {
    CellPath path(static_cast<std::size_t>(frames_));
    GridCell c{g_.nearest_lat_index(uniform(rng_, 38.0, 62.0)), g_.nearest_lon_index(uniform(rng_, 0.0, 360.0))};
    path[static_cast<std::size_t>(start)] = c;
    for (int k = 1; k < len; ++k) {
      GridCell next = c;
      if (jump_after && k - 1 == *jump_after) {
        // Move straight north or south by at least 1.6 x the step limit.
        const double deg = 1.6 * cfg_.max_step_km / (kEarthRadiusKm * std::numbers::pi / 180.0);
        const int cells = static_cast<int>(std::ceil(deg / std::abs(g_.d_lat)));
        next.i_lat += g_.lat_of(c.i_lat) > 50.0 ? cells : -cells;
      } else {
        for (int attempt = 0;; ++attempt) {
          next = {c.i_lat + static_cast<int>(uniform_index(rng_, 5)) - 2,
                  g_.wrap_lon(c.i_lon + static_cast<int>(uniform_index(rng_, 7)) - 3)};
          const double lat = g_.lat_of(next.i_lat);
          if (lat >= 30.0 && lat <= 70.0 && haversine_km(pos(c), pos(next)) <= cfg_.max_step_km) break;
          if (attempt > 100) {
            next = c;
            break;
          }
        }
      }
      c = next;
      path[static_cast<std::size_t>(start + k)] = c;
    }
    return path;
  }

  /// True when `path` keeps at least `min_sep` degrees from every placed low
  /// other than `skip`, in every frame both occupy and the frames adjacent.
  bool clear_of(const CellPath& path, double min_sep, const ScenarioLow* skip = nullptr) const {
    for (const auto& other : lows_) {
      if (&other == skip) continue;
      for (int f = 0; f < frames_; ++f) {
        const auto& a = path[static_cast<std::size_t>(f)];
        if (!a) continue;
        for (int df = -1; df <= 1; ++df) {
          const int h = f + df;
          if (h < 0 || h >= frames_) continue;
          const auto& b = other.cells[static_cast<std::size_t>(h)];
          if (b && angular_separation_deg(pos(*a), pos(*b)) < min_sep) return false;
        }
      }
    }
    return true;
  }

  void place(PlantKind kind, int len, std::optional<int> jump_after, double depth) {
    const double sep = 1.5 * cfg_.neighbor_min_deg;
    for (int attempt = 0; attempt < 500; ++attempt) {
      const int start = static_cast<int>(uniform_index(rng_, static_cast<std::uint64_t>(frames_ - len + 1)));
      auto path = walk(start, len, jump_after);
      if (!clear_of(path, sep)) continue;
      add(kind, std::move(path), depth);
      return;
    }
    throw SynthError("could not place a " + std::string(to_string(kind)) + " low within the retry budget");
  }

  /// A shallower low riding at a fixed offset beside a compliant one.
  void place_companion() {
    const double sep = 1.5 * cfg_.neighbor_min_deg;
    const int offset = static_cast<int>(std::lround(0.7 * cfg_.neighbor_min_deg / std::abs(g_.d_lat)));
    std::vector<std::size_t> order(lows_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order.begin(), order.end(), rng_);
    for (auto i : order) {
      if (lows_[i].kind != PlantKind::Compliant) continue;
      for (int dir : {1, -1}) {
        CellPath path(static_cast<std::size_t>(frames_));
        for (int f = 0; f < frames_; ++f) {
          const auto& c = lows_[i].cells[static_cast<std::size_t>(f)];
          if (c) path[static_cast<std::size_t>(f)] = GridCell{c->i_lat + dir * offset, c->i_lon};
        }
        if (!clear_of(path, sep, &lows_[i])) continue;
        const double depth = 0.5 * lows_[i].low.depth;
        add(PlantKind::TooClose, std::move(path), depth);
        return;
      }
    }
    throw SynthError("no compliant low has room for a close companion");
  }

  TrackScenario finish(std::uint64_t seed) {
    TrackScenario sc;
    sc.spec.frames = frames_;
    sc.spec.geometry = g_;
    sc.spec.seed = seed;
    for (const auto& l : lows_) sc.spec.lows.push_back(l.low);
    sc.lows = std::move(lows_);
    return sc;
  }

  Rng& rng() { return rng_; }
  double sigma() const { return 0.25 * cfg_.neighbor_min_deg; }

 private:
  void add(PlantKind kind, CellPath path, double depth) {
    ScenarioLow l;
    l.kind = kind;
    l.low.depth = depth;
    l.low.radius_deg = sigma();
    for (const auto& c : path) {
      l.low.path.push_back(c ? std::optional<LatLon>(pos(*c)) : std::nullopt);
    }
    l.cells = std::move(path);
    lows_.push_back(std::move(l));
  }

  Rng rng_;
  TrackerConfig cfg_;
  int frames_;
  GridGeometry g_;
  std::vector<ScenarioLow> lows_;
};

}  // namespace

TrackScenario gen_track_scenario(std::uint64_t seed, const TrackerConfig& cfg, int frames,
                                 const GridGeometry& geometry) {
  cfg.validate();
  const int m = cfg.min_frames;
  if (m < 2 || frames < std::max(m + 1, 2 * (m - 1))) {
    throw SynthError("scenario needs at least max(min_frames + 1, 2 (min_frames - 1)) frames");
  }
  if (!geometry.valid()) throw SynthError("scenario geometry is not a valid global grid");
  ScenarioBuilder b(seed, cfg, frames, geometry);
  const int compliant = 2 + static_cast<int>(uniform_index(b.rng(), 3));
  for (int k = 0; k < compliant; ++k) {
    const int len = m + static_cast<int>(uniform_index(b.rng(), static_cast<std::uint64_t>(frames - m + 1)));
    b.place(PlantKind::Compliant, len, std::nullopt, uniform(b.rng(), 800.0, 1500.0));
  }
  b.place(PlantKind::TooShort, m - 1, std::nullopt, uniform(b.rng(), 800.0, 1500.0));
  b.place(PlantKind::TooFast, 2 * (m - 1), m - 2, uniform(b.rng(), 800.0, 1500.0));
  b.place_companion();
  return b.finish(seed);
}

void SynthImageSpec::validate() const {
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw SynthError("shape center must be finite");
  if (!(size > 0.0 && size <= 1.0)) throw SynthError("shape size must be in (0, 1]");
  if (!(noise >= 0.0 && noise <= 0.5)) throw SynthError("noise must be in [0, 0.5]");
  if (!std::isfinite(rotation_deg)) throw SynthError("rotation must be finite");
  if (canvas < 8) throw SynthError("canvas must be at least 8 pixels");
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Point {
  double u = 0.0;
  double v = 0.0;
};

/// Max-composites Gaussian stamps into a layer, in shape units mapped to pixels.
class Painter {
 public:
  Painter(const SynthImageSpec& spec)
      : n_(spec.canvas),
        layer_(ImageF::Zero(spec.canvas, spec.canvas)),
        cx_(spec.cx * spec.canvas),
        cy_(spec.cy * spec.canvas),
        scale_(spec.size * spec.canvas),
        cos_(std::cos(spec.rotation_deg * kPi / 180.0)),
        sin_(std::sin(spec.rotation_deg * kPi / 180.0)) {}

  double scale() const { return scale_; }
  ImageF& layer() { return layer_; }

  void stamp(Point p, double sigma, double intensity) {
    const double px = cx_ + scale_ * (cos_ * p.u - sin_ * p.v);
    const double py = cy_ + scale_ * (sin_ * p.u + cos_ * p.v);
    const double s = std::max(sigma * scale_, 0.6);
    const double reach = 3.0 * s;
    const int x0 = std::max(0, static_cast<int>(std::floor(px - reach)));
    const int x1 = std::min(n_ - 1, static_cast<int>(std::ceil(px + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(py - reach)));
    const int y1 = std::min(n_ - 1, static_cast<int>(std::ceil(py + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - px, dy = y + 0.5 - py;
        const auto val = static_cast<float>(intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s)));
        layer_(y, x) = std::max(layer_(y, x), val);
      }
    }
  }

  /// Stamps along a curve so consecutive stamps are at most half a pixel apart.
  template <class Curve, class Keep>
  void stroke(Curve curve, double sigma, double intensity, Keep keep) {
    int steps = 16;
    double len = 0.0;
    Point prev = curve(0.0);
    for (int i = 1; i <= 64; ++i) {
      const Point q = curve(i / 64.0);
      len += std::hypot(q.u - prev.u, q.v - prev.v);
      prev = q;
    }
    steps = std::max(steps, static_cast<int>(std::ceil(2.0 * len * scale_)));
    for (int i = 0; i <= steps; ++i) {
      const Point p = curve(static_cast<double>(i) / steps);
      if (keep(p)) stamp(p, sigma, intensity);
    }
  }

 private:
  int n_;
  ImageF layer_;
  double cx_, cy_, scale_, cos_, sin_;
};

constexpr Point kHead{0.0, -0.3};

Point spiral(double t) {
  // r grows from 0.08 to 0.5 over one turn, ending on the right of the loop.
  const double phi = 2.0 * kPi * t;
  const double r = 0.08 * std::exp(std::log(0.5 / 0.08) * t);
  return {kHead.u + r * std::cos(phi), kHead.v + r * std::sin(phi)};
}

Point tail(double t) {
  const Point a{kHead.u + 0.5, kHead.v}, c{0.55, 0.4}, b{0.15, 1.0};
  const double s = 1.0 - t;
  return {s * s * a.u + 2 * s * t * c.u + t * t * b.u, s * s * a.v + 2 * s * t * c.v + t * t * b.v};
}

void paint_mature(Painter& p, double intensity, const std::function<bool(Point)>& keep) {
  p.stroke(spiral, 0.08, intensity, keep);
  p.stroke(tail, 0.07, 0.9 * intensity, keep);
  if (keep(kHead)) p.stamp(kHead, 0.12, 0.85 * intensity);
}

/// Loosely organized: a main blob with a secondary cell and a faint comma arc,
/// all jittered per seed.
void paint_developing(Painter& p, Rng& rng) {
  p.stamp({0.0, 0.0}, 0.28, 0.8);
  const double a = uniform(rng, 0.0, 2.0 * kPi);
  const double d = uniform(rng, 0.1, 0.25);
  p.stamp({d * std::cos(a), d * std::sin(a)}, uniform(rng, 0.12, 0.2), uniform(rng, 0.55, 0.8));
  const double start = uniform(rng, 160.0, 240.0);
  const double span = uniform(rng, 60.0, 120.0);
  const double radius = uniform(rng, 0.5, 0.7);
  auto arc = [=](double t) {
    const double th = (start + span * t) * kPi / 180.0;
    return Point{radius * std::cos(th), radius * std::sin(th)};
  };
  p.stroke(arc, 0.05, uniform(rng, 0.35, 0.6), [](Point) { return true; });
}

/// Two passes of a separable box blur.
void blur(ImageF& img, int radius) {
  if (radius < 1) return;
  const Eigen::Index h = img.rows(), w = img.cols();
  ImageF tmp(h, w);
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        const Eigen::Index a = std::max<Eigen::Index>(0, x - radius), b = std::min(w - 1, x + radius);
        tmp(y, x) = img.row(y).segment(a, b - a + 1).sum() / static_cast<float>(2 * radius + 1);
      }
    }
    for (Eigen::Index y = 0; y < h; ++y) {
      const Eigen::Index a = std::max<Eigen::Index>(0, y - radius), b = std::min(h - 1, y + radius);
      img.row(y) = tmp.middleRows(a, b - a + 1).colwise().sum() / static_cast<float>(2 * radius + 1);
    }
  }
}

BoundingBox layer_box(const ImageF& layer) {
  const float peak = layer.maxCoeff();
  if (!(peak > 0.0f)) throw SynthError("shape lies entirely outside the canvas");
  const float thr = 0.2f * peak;
  int x0 = static_cast<int>(layer.cols()), y0 = static_cast<int>(layer.rows()), x1 = -1, y1 = -1;
  for (Eigen::Index y = 0; y < layer.rows(); ++y) {
    for (Eigen::Index x = 0; x < layer.cols(); ++x) {
      if (layer(y, x) < thr) continue;
      x0 = std::min(x0, static_cast<int>(x));
      x1 = std::max(x1, static_cast<int>(x));
      y0 = std::min(y0, static_cast<int>(y));
      y1 = std::max(y1, static_cast<int>(y));
    }
  }
  const double n_x = static_cast<double>(layer.cols()), n_y = static_cast<double>(layer.rows());
  BoundingBox b{x0 / n_x, y0 / n_y, (x1 + 1) / n_x, (y1 + 1) / n_y};
  const double mx = 0.05 * b.width(), my = 0.05 * b.height();
  return clip_unit({b.xmin - mx, b.ymin - my, b.xmax + mx, b.ymax + my});
}

}  // namespace

ShapeLayer render_shape(const SynthImageSpec& spec) {
  spec.validate();
  Painter p(spec);
  switch (spec.stage) {
    case StageClass::Developing: {
      Rng rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
      paint_developing(p, rng);
      break;
    }
    case StageClass::Mature:
      paint_mature(p, 1.0, [](Point) { return true; });
      break;
    case StageClass::Declining: {
      Rng rng(spec.seed ^ 0xD1B54A32D192ED03ULL);
      std::vector<Point> holes;
      for (int k = 0; k < 6; ++k) {
        const double t = uniform01(rng);
        holes.push_back(k % 2 == 0 ? spiral(t) : tail(t));
      }
      auto keep = [&](Point q) {
        for (const auto& h : holes) {
          if (std::hypot(q.u - h.u, q.v - h.v) < 0.16) return false;
        }
        return true;
      };
      paint_mature(p, 0.75, keep);
      blur(p.layer(), std::max(1, static_cast<int>(std::lround(0.15 * p.scale()))));
      break;
    }
  }
  ShapeLayer out;
  out.box = layer_box(p.layer());
  out.layer = std::move(p.layer());
  return out;
}

namespace {

constexpr float kBackground = 0.06f;

Gray8 compose(const ImageF& shapes, double noise, Rng& rng) {
  ImageF img = kBackground + 0.9f * shapes;
  if (noise > 0.0) {
    for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] += static_cast<float>(noise * normal(rng));
  }
  return to_gray8(img);
}

ImageF crop_resample(const ImageF& img, const BoundingBox& box, int res) {
  const auto w = static_cast<double>(img.cols()), h = static_cast<double>(img.rows());
  const int x0 = std::clamp(static_cast<int>(std::floor(box.xmin * w)), 0, static_cast<int>(w) - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.ymin * h)), 0, static_cast<int>(h) - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.xmax * w)), x0 + 1, static_cast<int>(w));
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.ymax * h)), y0 + 1, static_cast<int>(h));
  const ImageF crop = img.block(y0, x0, y1 - y0, x1 - x0);
  return resize_bilinear(crop, res, res);
}

double correlation(const ImageF& a, const ImageF& b) {
  const Eigen::ArrayXf x = Eigen::Map<const Eigen::ArrayXf>(a.data(), a.size()) - a.mean();
  const Eigen::ArrayXf y = Eigen::Map<const Eigen::ArrayXf>(b.data(), b.size()) - b.mean();
  const double den = std::sqrt(static_cast<double>((x * x).sum()) * static_cast<double>((y * y).sum()));
  return den > 0.0 ? static_cast<double>((x * y).sum()) / den : 0.0;
}

}  // namespace

SynthImage gen_cyclone_image(const SynthImageSpec& spec) {
  const auto shape = render_shape(spec);
  Rng rng(spec.seed);
  return {compose(shape.layer, spec.noise, rng), shape.box, spec.stage};
}

std::array<ImageF, kNumStages> canonical_templates(int resolution) {
  std::array<ImageF, kNumStages> out;
  for (int c = 0; c < kNumStages; ++c) {
    SynthImageSpec spec;
    spec.stage = static_cast<StageClass>(c);
    spec.size = 0.3;
    spec.noise = 0.0;
    // Developing and Declining vary per seed, so their templates average several draws.
    const int draws = spec.stage == StageClass::Mature ? 1 : 4;
    ImageF acc = ImageF::Zero(resolution, resolution);
    for (int k = 0; k < draws; ++k) {
      spec.seed = static_cast<std::uint64_t>(k);
      const auto shape = render_shape(spec);
      acc += crop_resample(shape.layer, shape.box, resolution);
    }
    out[static_cast<std::size_t>(c)] = acc / static_cast<float>(draws);
  }
  return out;
}

StageClass classify_by_template(const Gray8& image, const BoundingBox& box,
                                const std::array<ImageF, kNumStages>& templates) {
  const ImageF patch = crop_resample(to_float(image), box, static_cast<int>(templates[0].rows()));
  int best = 0;
  double best_r = -2.0;
  for (int c = 0; c < kNumStages; ++c) {
    const double r = correlation(patch, templates[static_cast<std::size_t>(c)]);
    if (r > best_r) {
      best_r = r;
      best = c;
    }
  }
  return static_cast<StageClass>(best);
}

SynthDataset gen_dataset(const std::array<std::size_t, kNumStages>& counts, std::uint64_t seed,
                         const SynthDatasetOptions& opt) {
  if (!(opt.min_size > 0.0 && opt.min_size <= opt.max_size && opt.max_size <= 1.0) ||
      opt.placement_attempts < 1) {
    throw SynthError("dataset options out of range");
  }
  Rng rng(seed);
  std::vector<StageClass> pool;
  for (int c = 0; c < kNumStages; ++c) {
    pool.insert(pool.end(), counts[static_cast<std::size_t>(c)], static_cast<StageClass>(c));
  }
  shuffle(pool.begin(), pool.end(), rng);

  SynthDataset out;
  out.manifest.seed = seed;
  std::size_t next = 0;
  while (next < pool.size()) {
    const std::size_t want = std::min<std::size_t>(1 + uniform_index(rng, 3), pool.size() - next);
    Rng frame_rng(rng());
    const int frame = static_cast<int>(out.images.size());
    ImageF shapes = ImageF::Zero(opt.canvas, opt.canvas);
    ManifestEntry entry;
    entry.frame = frame;
    entry.image = frame_image_path(frame);
    entry.split = opt.split;
    for (std::size_t k = 0; k < want; ++k, ++next) {
      bool placed = false;
      for (int attempt = 0; attempt < opt.placement_attempts && !placed; ++attempt) {
        SynthImageSpec spec;
        spec.stage = pool[next];
        spec.canvas = opt.canvas;
        spec.size = uniform(frame_rng, opt.min_size, opt.max_size);
        spec.cx = uniform(frame_rng, 0.15, 0.85);
        spec.cy = uniform(frame_rng, 0.2, 0.75);
        spec.rotation_deg = uniform(frame_rng, -15.0, 15.0);
        spec.seed = frame_rng();
        spec.noise = 0.0;
        auto shape = render_shape(spec);
        const bool clear = std::all_of(entry.boxes.begin(), entry.boxes.end(), [&](const LabeledBox& b) {
          return iou(b.box, shape.box) < opt.max_pair_iou;
        });
        if (!clear) continue;
        shapes = shapes.max(shape.layer);
        entry.boxes.push_back({shape.box, spec.stage});
        placed = true;
      }
      if (!placed) {
        throw SynthError("frame " + std::to_string(frame) + ": no placement with IoU < " +
                         std::to_string(opt.max_pair_iou) + " within " +
                         std::to_string(opt.placement_attempts) + " attempts");
      }
    }
    out.images.push_back(compose(shapes, opt.noise, frame_rng));
    out.manifest.entries.push_back(std::move(entry));
  }
  return out;
}

}  // namespace etc
