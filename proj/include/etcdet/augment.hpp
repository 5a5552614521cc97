#pragma once

#include "etcdet/box.hpp"
#include "etcdet/image.hpp"
#include "etcdet/rng.hpp"

#include <optional>
#include <vector>

namespace etc {

/// Grayscale image with normalized, stage-labeled boxes.
struct Sample {
  ImageF image;
  std::vector<LabeledBox> boxes;
};

/// Box in pixel coordinates of the sample's own image.
struct PixelBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;
  StageClass stage = StageClass::Developing;
};

struct AbsoluteSample {
  ImageF image;
  std::vector<PixelBox> boxes;
};

struct AugmentConfig {
  double brightness_delta = 0.125;
  double contrast_lo = 0.5;
  double contrast_hi = 1.5;
  /// Probability of applying each photometric component.
  double photometric_prob = 0.5;
  /// Minimum-IoU choices for the crop sampler; nullopt means "any window".
  /// The sampler also draws a "keep the whole image" option with equal weight.
  std::vector<std::optional<double>> crop_min_iou{0.1, 0.3, 0.5, 0.7, 0.9, std::nullopt};
  double crop_min_scale = 0.3;
  int crop_attempts = 50;
  double mirror_prob = 0.5;
  int output_size = 300;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on out-of-range knobs.
  void validate() const;
};

/// Deterministic core of photometric_distort: x -> clamp(contrast * x + delta).
Sample apply_photometric(Sample sample, double delta, double contrast);

/// Random brightness shift and contrast scale, each with photometric_prob;
/// boxes untouched.
Sample photometric_distort(Sample sample, const AugmentConfig& cfg, Rng& rng);

AbsoluteSample to_absolute(Sample sample);
Sample to_relative(AbsoluteSample sample);

struct CropWindow {
  int left = 0;
  int top = 0;
  int width = 0;
  int height = 0;
};

/// Crops to `window`: keeps boxes whose center lies strictly inside, clips
/// them to the window and shifts them into its frame. Returns nullopt if no
/// box survives.
std::optional<AbsoluteSample> crop_to_window(const AbsoluteSample& sample, const CropWindow& w);

/// Min-IoU window sampler over pixel-space boxes. Falls back to the original
/// sample when no window keeps a box within the retry budget.
AbsoluteSample random_crop(AbsoluteSample sample, const AugmentConfig& cfg, Rng& rng);
Sample random_crop(Sample sample, const AugmentConfig& cfg, Rng& rng);

/// Horizontal flip: xmin' = 1 - xmax, xmax' = 1 - xmin.
Sample mirror(Sample sample);
Sample random_mirror(Sample sample, double prob, Rng& rng);

/// Bilinear resample (half-pixel centers) to size x size; normalized boxes unchanged.
Sample resize(Sample sample, int size);
ImageF resize_bilinear(const ImageF& image, int out_h, int out_w);

/// photometric -> absolute -> crop -> relative -> mirror -> resize.
Sample augment_sample(Sample sample, const AugmentConfig& cfg, Rng& rng);

/// Evaluation-time preprocessing: resize only.
Sample preprocess_eval(Sample sample, int size);

}  // namespace etc
