#pragma once

#include "etcdet/detector/box_coding.hpp"
#include "etcdet/detector/model.hpp"
#include "etcdet/detector/multibox_loss.hpp"
#include "etcdet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace etc::testing {

struct TensorCheck {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny)
};

/// Two-image batch on the reduced model: smooth blobs on noise with one or two
/// boxes each.
struct GradFixture {
  detector::MiniSSD<double> model;
  detector::Mat<double> input;
  std::vector<detector::MatchAssignment> assignments;
};

inline GradFixture make_grad_fixture(std::uint64_t seed) {
  using namespace detector;
  const auto cfg = ModelConfig::reduced();
  GradFixture f{MiniSSD<double>(cfg, seed), {}, {}};
  Rng rng(seed * 7919 + 1);
  // Zero biases put dead units exactly on the ReLU kink; check at a generic point.
  for (auto& t : f.model.parameters()) {
    if (t.name.ends_with(".bias")) {
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += uniform(rng, -0.1, 0.1);
    }
  }
  const int n = cfg.input_size;
  const auto priors = generate_priors(cfg.priors);
  std::vector<ImageF> images;
  for (int b = 0; b < 2; ++b) {
    ImageF img(n, n);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(uniform(rng, 0.0, 0.2));
    std::vector<LabeledBox> boxes;
    const int count = 1 + static_cast<int>(uniform_index(rng, 2));
    for (int k = 0; k < count; ++k) {
      const double w = uniform(rng, 0.2, 0.6), h = uniform(rng, 0.2, 0.6);
      const double x = uniform(rng, 0.0, 1.0 - w), y = uniform(rng, 0.0, 1.0 - h);
      boxes.push_back({{x, y, x + w, y + h}, static_cast<StageClass>(uniform_index(rng, 3))});
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          const double dx = (c + 0.5) / n - (x + w / 2), dy = (r + 0.5) / n - (y + h / 2);
          img(r, c) += static_cast<float>(0.7 * std::exp(-(dx * dx / (w * w) + dy * dy / (h * h)) * 4));
        }
      }
    }
    images.push_back(img);
    f.assignments.push_back(match_priors(priors, boxes, 0.5));
  }
  std::vector<const ImageF*> ptrs = {&images[0], &images[1]};
  f.input = f.model.pack(ptrs);
  return f;
}

inline double fixture_loss(const GradFixture& f) {
  const auto out = f.model.forward(f.input, 2);
  return detector::multibox_loss<double>(out.offsets, out.logits, f.assignments).total;
}

/// Central differences over every parameter of every tensor.
inline std::vector<TensorCheck> check_gradients(GradFixture& f, double eps) {
  using namespace detector;
  ForwardCache<double> cache;
  const auto out = f.model.forward(f.input, 2, &cache);
  Mat<double> d_off, d_log;
  multibox_loss<double>(out.offsets, out.logits, f.assignments, {}, &d_off, &d_log);
  const auto grads = f.model.backward(cache, d_off, d_log);

  std::vector<TensorCheck> result;
  auto& params = f.model.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat<double>& w = params[t].value;
    Mat<double> numeric(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + eps;
      const double up = fixture_loss(f);
      w.data()[i] = keep - eps;
      const double down = fixture_loss(f);
      w.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * eps);
    }
    const double diff = (grads[t] - numeric).norm();
    const double scale = std::max({grads[t].norm(), numeric.norm(), 1e-12});
    result.push_back({params[t].name, diff / scale});
  }
  return result;
}

}  // namespace etc::testing
