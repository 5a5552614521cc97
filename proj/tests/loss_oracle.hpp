#pragma once

#include "etcdet/detector/box_coding.hpp"
#include "etcdet/detector/multibox_loss.hpp"
#include "etcdet/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace etc::testing {

using detector::Mat;
using detector::MatchAssignment;

// Scalar reference for one image, straight from the definition: cross-entropy
// on positives, the neg_pos_ratio * N hardest background priors, smooth L1 on
// positive offsets.
struct RefLoss {
  double conf = 0.0;
  double loc = 0.0;
  int n = 0;
};

inline RefLoss reference_image_loss(const Mat<double>& off, const Mat<double>& logit, const std::vector<int>& labels,
                             const std::vector<std::array<double, 4>>& targets, int ratio) {
  RefLoss r;
  std::vector<std::pair<double, int>> neg;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    double z = 0.0;
    for (Eigen::Index k = 0; k < logit.cols(); ++k) z += std::exp(logit(p, k));
    const double log_z = std::log(z);
    if (labels[p] > 0) {
      ++r.n;
      r.conf += log_z - logit(p, labels[p]);
      for (int k = 0; k < 4; ++k) {
        const double d = std::abs(off(p, k) - targets[p][k]);
        r.loc += d < 1.0 ? 0.5 * d * d : d - 0.5;
      }
    } else {
      neg.emplace_back(-(log_z - logit(p, 0)), static_cast<int>(p));
    }
  }
  std::sort(neg.begin(), neg.end());
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(ratio * r.n), neg.size());
  for (std::size_t i = 0; i < k; ++i) r.conf += -neg[i].first;
  return r;
}

struct Fixture {
  Mat<double> offsets;
  Mat<double> logits;
  std::vector<MatchAssignment> assignments;
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<std::array<double, 4>>> targets;
};

inline Fixture random_fixture(Rng& rng, int batch, int priors, int classes, double pos_rate) {
  Fixture f;
  f.offsets.resize(batch * priors, 4);
  f.logits.resize(batch * priors, classes + 1);
  for (Eigen::Index i = 0; i < f.offsets.size(); ++i) f.offsets.data()[i] = uniform(rng, -2.5, 2.5);
  for (Eigen::Index i = 0; i < f.logits.size(); ++i) f.logits.data()[i] = uniform(rng, -4, 4);
  for (int b = 0; b < batch; ++b) {
    MatchAssignment m;
    m.labels.assign(priors, 0);
    m.matched_gt.assign(priors, -1);
    m.targets = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(priors, 4);
    std::vector<std::array<double, 4>> t(priors, {0, 0, 0, 0});
    for (int p = 0; p < priors; ++p) {
      if (!bernoulli(rng, pos_rate)) continue;
      m.labels[p] = 1 + static_cast<int>(uniform_index(rng, classes));
      m.matched_gt[p] = 0;
      ++m.num_positive;
      for (int k = 0; k < 4; ++k) m.targets(p, k) = t[p][k] = uniform(rng, -3, 3);
    }
    f.labels.push_back(m.labels);
    f.targets.push_back(t);
    f.assignments.push_back(std::move(m));
  }
  return f;
}

}  // namespace etc::testing
