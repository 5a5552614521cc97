#include "etcdet/detector/box_coding.hpp"
#include "etcdet/detector/infer.hpp"
#include "etcdet/detector/model.hpp"
#include "etcdet/detector/multibox_loss.hpp"
#include "etcdet/detector/priors.hpp"
#include "etcdet/rng.hpp"
#include "loss_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace etc;
using namespace etc::detector;
using namespace etc::testing;

namespace {

double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  const double u = (a.xmax - a.xmin) * (a.ymax - a.ymin) + (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter;
  return u > 0 ? inter / u : 0.0;
}

BoundingBox random_box(Rng& rng, double min_side = 0.02) {
  const double w = uniform(rng, min_side, 0.6);
  const double h = uniform(rng, min_side, 0.6);
  const double x = uniform(rng, 0.0, 1.0 - w);
  const double y = uniform(rng, 0.0, 1.0 - h);
  return {x, y, x + w, y + h};
}

}  // namespace

TEST_CASE("default prior layout") {
  PriorConfig cfg;
  cfg.clip = false;
  const auto priors = generate_priors(cfg);
  CHECK(priors.size() == 18 * 18 * 3 + 9 * 9 * 3 + 5 * 5 * 3 + 3 * 3 * 3);
  CHECK(priors.size() == 1317u);
  CHECK(cfg.num_priors() == 1317);
  // First cell of the first map, ratio order 1, 2, 0.5.
  CHECK(priors[0].cx == doctest::Approx(0.5 / 18));
  CHECK(priors[0].w == doctest::Approx(0.15));
  CHECK(priors[1].w == doctest::Approx(0.15 * std::sqrt(2.0)));
  CHECK(priors[1].h == doctest::Approx(0.15 / std::sqrt(2.0)));
  CHECK(priors[2].w == doctest::Approx(0.15 / std::sqrt(2.0)));
  // Row-major cells: index 3 is column 1 of row 0.
  CHECK(priors[3].cx == doctest::Approx(1.5 / 18));
  CHECK(priors[3].cy == doctest::Approx(0.5 / 18));
  // Last prior sits on the 3x3 map.
  CHECK(priors.back().cx == doctest::Approx(2.5 / 3));
  cfg.clip = true;
  const auto clipped = generate_priors(cfg);
  REQUIRE(clipped.size() == priors.size());
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const auto c = clipped[i].corners();
    const auto want = clip_unit(priors[i].corners());
    CHECK(c.xmin == doctest::Approx(want.xmin));
    CHECK(c.ymax == doctest::Approx(want.ymax));
    CHECK(c.xmin >= -1e-12);
    CHECK(c.xmax <= 1 + 1e-12);
  }
  CHECK(clipped[0].w < priors[0].w);

  PriorConfig bad = cfg;
  bad.scales = {0.2, 0.1, 0.5, 0.7};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.scales.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("encode then decode is the identity") {
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto gt = random_box(rng, 0.005);
    const auto pb = PriorBox::from_corners(random_box(rng));
    const auto back = decode(encode(gt, pb), pb);
    worst = std::max({worst, std::abs(back.xmin - gt.xmin), std::abs(back.ymin - gt.ymin),
                      std::abs(back.xmax - gt.xmax), std::abs(back.ymax - gt.ymax)});
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("encoding against hand values") {
  const PriorBox p{0.5, 0.5, 0.2, 0.4};
  const auto t = encode({0.45, 0.35, 0.65, 0.75}, p);
  CHECK(t[0] == doctest::Approx((0.55 - 0.5) / (0.1 * 0.2)));
  CHECK(t[1] == doctest::Approx((0.55 - 0.5) / (0.1 * 0.4)));
  CHECK(t[2] == doctest::Approx(std::log(1.0) / 0.2));
  CHECK(t[3] == doctest::Approx(std::log(1.0) / 0.2));
  for (double v : encode({0.4, 0.3, 0.6, 0.7}, p)) CHECK(std::abs(v) < 1e-12);
  CHECK_THROWS_AS(encode({0.4, 0.3, 0.4, 0.7}, p), std::invalid_argument);
}

TEST_CASE("matching follows the two-step rule") {
  Rng rng(8);
  PriorConfig pc;
  pc.feature_map_sizes = {4, 2};
  pc.scales = {0.3, 0.6};
  const auto priors = generate_priors(pc);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<LabeledBox> gts;
    const int n = static_cast<int>(uniform_index(rng, 4));
    for (int g = 0; g < n; ++g) gts.push_back({random_box(rng), static_cast<StageClass>(uniform_index(rng, 3))});
    const double thr = 0.5;
    const auto m = match_priors(priors, gts, thr);

    // Oracle.
    const int P = static_cast<int>(priors.size());
    std::vector<int> want(P, -1);
    for (int g = 0; g < n; ++g) {
      int best = -1;
      double best_iou = -1.0;
      for (int p = 0; p < P; ++p) {
        if (want[p] >= 0) continue;
        const double v = box_iou(priors[p].corners(), gts[g].box);
        if (v > best_iou) {
          best_iou = v;
          best = p;
        }
      }
      if (best >= 0) want[best] = g;
    }
    std::vector<bool> forced(P);
    for (int p = 0; p < P; ++p) forced[p] = want[p] >= 0;
    for (int p = 0; p < P; ++p) {
      if (forced[p]) continue;
      int best = -1;
      double best_iou = -1.0;
      for (int g = 0; g < n; ++g) {
        const double v = box_iou(priors[p].corners(), gts[g].box);
        if (v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best >= 0 && best_iou > thr) want[p] = best;
    }
    int pos = 0;
    for (int p = 0; p < P; ++p) {
      CHECK(m.matched_gt[p] == want[p]);
      if (want[p] >= 0) {
        ++pos;
        CHECK(m.labels[p] == 1 + static_cast<int>(gts[want[p]].stage));
        const auto t = encode(gts[want[p]].box, priors[p]);
        for (int k = 0; k < 4; ++k) CHECK(m.targets(p, k) == doctest::Approx(t[k]));
      } else {
        CHECK(m.labels[p] == 0);
        CHECK(m.targets.row(p).isZero());
      }
    }
    CHECK(m.num_positive == pos);
    CHECK(m.num_positive >= n);
  }
}

TEST_CASE("loss equals the scalar reference on randomized fixtures") {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int batch = 1 + static_cast<int>(uniform_index(rng, 3));
    const int priors = 5 + static_cast<int>(uniform_index(rng, 40));
    const auto f = random_fixture(rng, batch, priors, 3, uniform(rng, 0.02, 0.4));
    LossOptions opt;
    opt.alpha = uniform(rng, 0.25, 2.0);
    opt.neg_pos_ratio = 1 + static_cast<int>(uniform_index(rng, 4));
    const auto got = multibox_loss<double>(f.offsets, f.logits, f.assignments, opt);

    double conf = 0.0, loc = 0.0;
    int n = 0;
    for (int b = 0; b < batch; ++b) {
      const auto r = reference_image_loss(f.offsets.middleRows(b * priors, priors),
                                          f.logits.middleRows(b * priors, priors), f.labels[b], f.targets[b],
                                          opt.neg_pos_ratio);
      conf += r.conf;
      loc += r.loc;
      n += r.n;
    }
    const double total = n > 0 ? (conf + opt.alpha * loc) / n : 0.0;
    CHECK(got.n == n);
    if (n == 0) {
      CHECK(got.total == 0.0);
      continue;
    }
    const double rel = std::abs(got.total - total) / std::abs(total);
    worst = std::max(worst, rel);
    CHECK(rel <= 1e-9);
    CHECK(got.conf == doctest::Approx(conf).epsilon(1e-9));
    CHECK(got.loc == doctest::Approx(loc).epsilon(1e-9));
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("no positives gives exactly zero loss and gradient") {
  Rng rng(3);
  auto f = random_fixture(rng, 2, 20, 3, 0.0);
  Mat<double> dof, dlg;
  const auto got = multibox_loss<double>(f.offsets, f.logits, f.assignments, {}, &dof, &dlg);
  CHECK(got.total == 0.0);
  CHECK(got.conf == 0.0);
  CHECK(got.loc == 0.0);
  CHECK(got.n == 0.0);
  CHECK(dof.isZero(0.0));
  CHECK(dlg.isZero(0.0));
}

TEST_CASE("loss gradient w.r.t. head outputs matches finite differences") {
  Rng rng(12);
  auto f = random_fixture(rng, 2, 12, 3, 0.3);
  Mat<double> dof, dlg;
  LossOptions opt;
  opt.alpha = 0.7;
  multibox_loss<double>(f.offsets, f.logits, f.assignments, opt, &dof, &dlg);
  const double eps = 1e-6;
  auto check = [&](Mat<double>& x, const Mat<double>& g) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double keep = x.data()[i];
      x.data()[i] = keep + eps;
      const double up = multibox_loss<double>(f.offsets, f.logits, f.assignments, opt).total;
      x.data()[i] = keep - eps;
      const double down = multibox_loss<double>(f.offsets, f.logits, f.assignments, opt).total;
      x.data()[i] = keep;
      const double fd = (up - down) / (2 * eps);
      CHECK(std::abs(g.data()[i] - fd) <= 1e-8 + 1e-4 * std::abs(fd));
    }
  };
  check(f.offsets, dof);
  check(f.logits, dlg);
}

TEST_CASE("smooth L1") {
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(-2.0) == 1.5);
  CHECK(smooth_l1(1.0) == 0.5);
  CHECK(smooth_l1_grad(-3.0) == -1.0);
  CHECK(smooth_l1_grad(0.25) == 0.25);
}

TEST_CASE("col2im is the adjoint of im2col") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    ConvShape sh;
    sh.in_channels = 1 + static_cast<int>(uniform_index(rng, 4));
    sh.in_size = 3 + static_cast<int>(uniform_index(rng, 8));
    sh.spec.kernel = 1 + 2 * static_cast<int>(uniform_index(rng, 2));
    sh.spec.stride = 1 + static_cast<int>(uniform_index(rng, 2));
    sh.spec.pad = static_cast<int>(uniform_index(rng, 2));
    sh.out_size = conv_out_size(sh.in_size, sh.spec);
    const int batch = 1 + static_cast<int>(uniform_index(rng, 3));
    Mat<double> x(sh.in_channels, batch * sh.in_size * sh.in_size);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
    Mat<double> cols;
    im2col(x, sh, batch, cols);
    Mat<double> y(cols.rows(), cols.cols());
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform(rng, -1, 1);
    Mat<double> back;
    col2im(y, sh, batch, back);
    const double lhs = (cols.array() * y.array()).sum();
    const double rhs = (x.array() * back.array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("im2col against a direct convolution") {
  ConvShape sh{2, 5, 0, {3, 3, 2, 1}};
  sh.out_size = conv_out_size(5, sh.spec);
  CHECK(sh.out_size == 3);
  Rng rng(6);
  Mat<double> x(2, 25);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
  Mat<double> w(3, sh.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -1, 1);
  Mat<double> cols;
  im2col(x, sh, 1, cols);
  const Mat<double> y = w * cols;
  for (int o = 0; o < 3; ++o) {
    for (int oy = 0; oy < 3; ++oy) {
      for (int ox = 0; ox < 3; ++ox) {
        double want = 0.0;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
            for (int c = 0; c < 2; ++c) want += w(o, (ky * 3 + kx) * 2 + c) * x(c, iy * 5 + ix);
          }
        }
        CHECK(y(o, oy * 3 + ox) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("default MiniSSD shapes") {
  ModelConfig cfg;
  CHECK(cfg.feature_sizes() == std::vector<int>{150, 75, 38, 18, 9, 5, 3});
  MiniSSD<double> model(cfg, 1);
  CHECK(model.num_priors() == 1317);
  CHECK(model.parameter_count() > 50'000);
  CHECK(model.parameter_count() < 200'000);
  ImageF img = ImageF::Constant(300, 300, 0.5f);
  const ImageF* one[] = {&img};
  const auto out = model.forward(model.pack(std::span<const ImageF* const>(one, 1)), 1);
  CHECK(out.offsets.rows() == 1317);
  CHECK(out.logits.cols() == 4);
  CHECK(out.logits.allFinite());

  ImageF wrong = ImageF::Zero(100, 100);
  const ImageF* bad[] = {&wrong};
  CHECK_THROWS_AS(model.pack(std::span<const ImageF* const>(bad, 1)), std::invalid_argument);

  ModelConfig mismatched = cfg;
  mismatched.priors.feature_map_sizes = {19, 9, 5, 3};
  CHECK_THROWS_AS(mismatched.validate(), std::invalid_argument);
}

TEST_CASE("same seed, same weights") {
  MiniSSD<double> a(ModelConfig::reduced(), 4), b(ModelConfig::reduced(), 4), c(ModelConfig::reduced(), 5);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
  }
  CHECK_FALSE(a.parameters()[0].value == c.parameters()[0].value);
}

TEST_CASE("per-class greedy NMS") {
  std::vector<Detection> d = {
      {{0.1, 0.1, 0.5, 0.5}, StageClass::Mature, 0.9},
      {{0.12, 0.1, 0.52, 0.5}, StageClass::Mature, 0.8},      // suppressed by the first
      {{0.12, 0.1, 0.52, 0.5}, StageClass::Developing, 0.7},  // other class, kept
      {{0.6, 0.6, 0.9, 0.9}, StageClass::Mature, 0.95},
      {{0.3, 0.1, 0.7, 0.5}, StageClass::Mature, 0.6},        // IoU 1/3 with the first, kept
  };
  const auto kept = nms(d, 0.45, 200);
  REQUIRE(kept.size() == 4);
  CHECK(kept[0].score == 0.95);
  CHECK(kept[1].score == 0.9);
  CHECK(kept[2].score == 0.7);
  CHECK(kept[3].score == 0.6);
  CHECK(nms(d, 0.45, 2).size() == 2);
  CHECK(nms({}, 0.45, 10).empty());

  // Property: kept boxes of one class never overlap above the threshold, and
  // every dropped box overlaps a higher-scored kept box of its class.
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> cand;
    for (int i = 0; i < 30; ++i) {
      cand.push_back({random_box(rng), static_cast<StageClass>(uniform_index(rng, 3)), uniform01(rng)});
    }
    const auto out = nms(cand, 0.45, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) CHECK(out[i - 1].score >= out[i].score);
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        if (out[i].stage == out[j].stage) CHECK(box_iou(out[i].box, out[j].box) <= 0.45);
      }
    }
    for (const auto& c : cand) {
      const bool in = std::any_of(out.begin(), out.end(), [&](const Detection& k) {
        return k.score == c.score && k.box == c.box;
      });
      if (in) continue;
      const bool covered = std::any_of(out.begin(), out.end(), [&](const Detection& k) {
        return k.stage == c.stage && k.score >= c.score && box_iou(k.box, c.box) > 0.45;
      });
      CHECK(covered);
    }
  }
}

TEST_CASE("decode_detections thresholds, decodes and clips") {
  const std::vector<PriorBox> priors = {{0.5, 0.5, 0.2, 0.2}, {0.95, 0.5, 0.2, 0.2}};
  Mat<double> off = Mat<double>::Zero(2, 4);
  Mat<double> logits(2, 4);
  logits << 0.0, 0.0, 5.0, 0.0,  // Mature dominates
      0.0, 4.0, 0.0, 0.0;        // Developing, box runs off the right edge
  InferConfig cfg;
  cfg.score_threshold = 0.5;
  const auto dets = decode_detections<double>(off, logits, priors, cfg);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].stage == StageClass::Mature);
  CHECK(dets[0].score == doctest::Approx(std::exp(5.0) / (3 + std::exp(5.0))));
  CHECK(dets[0].box.xmin == doctest::Approx(0.4));
  CHECK(dets[1].stage == StageClass::Developing);
  CHECK(dets[1].box.xmax == 1.0);
  cfg.score_threshold = 0.99;
  CHECK(decode_detections<double>(off, logits, priors, cfg).empty());
}
