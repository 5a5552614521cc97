#include "etcdet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace etc {

void AugmentConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(photometric_prob) || !prob(mirror_prob)) {
    throw std::invalid_argument("augment probabilities must lie in [0, 1]");
  }
  if (output_size <= 0) throw std::invalid_argument("augment output_size must be positive");
  if (!(brightness_delta >= 0.0) || !(contrast_lo > 0.0) || contrast_hi < contrast_lo) {
    throw std::invalid_argument("augment photometric ranges are inconsistent");
  }
  if (!(crop_min_scale > 0.0 && crop_min_scale <= 1.0) || crop_attempts <= 0) {
    throw std::invalid_argument("augment crop parameters out of range");
  }
  for (const auto& t : crop_min_iou) {
    if (t && !(*t >= 0.0 && *t <= 1.0)) throw std::invalid_argument("crop_min_iou must lie in [0, 1]");
  }
}

Sample apply_photometric(Sample sample, double delta, double contrast) {
  sample.image = (sample.image * static_cast<float>(contrast) + static_cast<float>(delta))
                     .max(0.0f)
                     .min(1.0f);
  return sample;
}

Sample photometric_distort(Sample sample, const AugmentConfig& cfg, Rng& rng) {
  double delta = 0.0;
  double contrast = 1.0;
  if (bernoulli(rng, cfg.photometric_prob)) {
    delta = uniform(rng, -cfg.brightness_delta, cfg.brightness_delta);
  }
  if (bernoulli(rng, cfg.photometric_prob)) {
    contrast = uniform(rng, cfg.contrast_lo, cfg.contrast_hi);
  }
  return apply_photometric(std::move(sample), delta, contrast);
}

AbsoluteSample to_absolute(Sample sample) {
  const double w = static_cast<double>(sample.image.cols());
  const double h = static_cast<double>(sample.image.rows());
  AbsoluteSample out;
  out.image = std::move(sample.image);
  out.boxes.reserve(sample.boxes.size());
  for (const auto& lb : sample.boxes) {
    out.boxes.push_back({lb.box.xmin * w, lb.box.ymin * h, lb.box.xmax * w, lb.box.ymax * h,
                         lb.stage});
  }
  return out;
}

Sample to_relative(AbsoluteSample sample) {
  const double w = static_cast<double>(sample.image.cols());
  const double h = static_cast<double>(sample.image.rows());
  Sample out;
  out.image = std::move(sample.image);
  out.boxes.reserve(sample.boxes.size());
  for (const auto& pb : sample.boxes) {
    out.boxes.push_back({{pb.xmin / w, pb.ymin / h, pb.xmax / w, pb.ymax / h}, pb.stage});
  }
  return out;
}

namespace {

double window_iou(const CropWindow& w, const PixelBox& b) {
  const double iw = std::min<double>(w.left + w.width, b.xmax) - std::max<double>(w.left, b.xmin);
  const double ih = std::min<double>(w.top + w.height, b.ymax) - std::max<double>(w.top, b.ymin);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = static_cast<double>(w.width) * w.height +
                     (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter;
  return inter / uni;
}

}  // namespace

std::optional<AbsoluteSample> crop_to_window(const AbsoluteSample& sample, const CropWindow& w) {
  AbsoluteSample out;
  for (const auto& b : sample.boxes) {
    const double cx = 0.5 * (b.xmin + b.xmax);
    const double cy = 0.5 * (b.ymin + b.ymax);
    if (!(cx > w.left && cx < w.left + w.width && cy > w.top && cy < w.top + w.height)) continue;
    PixelBox c = b;
    c.xmin = std::max<double>(b.xmin, w.left) - w.left;
    c.ymin = std::max<double>(b.ymin, w.top) - w.top;
    c.xmax = std::min<double>(b.xmax, w.left + w.width) - w.left;
    c.ymax = std::min<double>(b.ymax, w.top + w.height) - w.top;
    if (c.xmax <= c.xmin || c.ymax <= c.ymin) continue;
    out.boxes.push_back(c);
  }
  if (out.boxes.empty()) return std::nullopt;
  out.image = sample.image.block(w.top, w.left, w.height, w.width);
  return out;
}

AbsoluteSample random_crop(AbsoluteSample sample, const AugmentConfig& cfg, Rng& rng) {
  const int W = static_cast<int>(sample.image.cols());
  const int H = static_cast<int>(sample.image.rows());
  if (sample.boxes.empty() || W < 2 || H < 2) return sample;
  // Index 0 keeps the whole image; the rest are the configured min-IoU modes.
  const auto mode = uniform_index(rng, cfg.crop_min_iou.size() + 1);
  if (mode == 0) return sample;
  const auto& min_iou = cfg.crop_min_iou[mode - 1];
  for (int attempt = 0; attempt < cfg.crop_attempts; ++attempt) {
    const double w = uniform(rng, cfg.crop_min_scale * W, W);
    const double h = uniform(rng, cfg.crop_min_scale * H, H);
    if (h / w < 0.5 || h / w > 2.0) continue;
    CropWindow win;
    win.width = std::max(1, static_cast<int>(w));
    win.height = std::max(1, static_cast<int>(h));
    win.left = static_cast<int>(uniform(rng, 0.0, W - win.width));
    win.top = static_cast<int>(uniform(rng, 0.0, H - win.height));
    if (min_iou) {
      bool ok = false;
      for (const auto& b : sample.boxes) ok = ok || window_iou(win, b) >= *min_iou;
      if (!ok) continue;
    }
    if (auto cropped = crop_to_window(sample, win)) return std::move(*cropped);
  }
  return sample;
}

Sample random_crop(Sample sample, const AugmentConfig& cfg, Rng& rng) {
  return to_relative(random_crop(to_absolute(std::move(sample)), cfg, rng));
}

Sample mirror(Sample sample) {
  sample.image = sample.image.rowwise().reverse().eval();
  for (auto& lb : sample.boxes) {
    const double xmin = 1.0 - lb.box.xmax;
    const double xmax = 1.0 - lb.box.xmin;
    lb.box.xmin = xmin;
    lb.box.xmax = xmax;
  }
  return sample;
}

Sample random_mirror(Sample sample, double prob, Rng& rng) {
  return bernoulli(rng, prob) ? mirror(std::move(sample)) : sample;
}

ImageF resize_bilinear(const ImageF& image, int out_h, int out_w) {
  const int in_h = static_cast<int>(image.rows());
  const int in_w = static_cast<int>(image.cols());
  ImageF out(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in_h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in_w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * image(y0, x0) + wx * image(y0, x1);
      const double bot = (1 - wx) * image(y1, x0) + wx * image(y1, x1);
      out(y, x) = static_cast<float>((1 - wy) * top + wy * bot);
    }
  }
  return out;
}

Sample resize(Sample sample, int size) {
  if (sample.image.rows() != size || sample.image.cols() != size) {
    sample.image = resize_bilinear(sample.image, size, size);
  }
  return sample;
}

Sample augment_sample(Sample sample, const AugmentConfig& cfg, Rng& rng) {
  sample = photometric_distort(std::move(sample), cfg, rng);
  auto absolute = random_crop(to_absolute(std::move(sample)), cfg, rng);
  sample = to_relative(std::move(absolute));
  sample = random_mirror(std::move(sample), cfg.mirror_prob, rng);
  for (auto& lb : sample.boxes) lb.box = clip_unit(lb.box);
  return resize(std::move(sample), cfg.output_size);
}

Sample preprocess_eval(Sample sample, int size) { return resize(std::move(sample), size); }

}  // namespace etc
