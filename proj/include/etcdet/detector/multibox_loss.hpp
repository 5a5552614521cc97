#pragma once

#include "etcdet/detector/box_coding.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace etc::detector {

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
template <class S>
S smooth_l1(S x) {
  const S a = std::abs(x);
  return a < S(1) ? S(0.5) * x * x : a - S(0.5);
}

template <class S>
S smooth_l1_grad(S x) {
  return std::abs(x) < S(1) ? x : (x > S(0) ? S(1) : S(-1));
}

struct LossBreakdown {
  double conf = 0.0;
  double loc = 0.0;
  double alpha = 1.0;
  double n = 0.0;
  double total = 0.0;
};

struct LossOptions {
  double alpha = 1.0;
  int neg_pos_ratio = 3;
};

template <class S>
using HeadMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Unnormalized per-image terms plus their gradients (also unnormalized).
template <class S>
struct ImageLoss {
  double conf = 0.0;
  double loc = 0.0;
  int num_positive = 0;
};

/// Adds one image's confidence and localization sums. Negatives are the
/// neg_pos_ratio * N background priors with the largest background log-loss
/// (lower prior index first on ties). When gradient outputs are given, the
/// unnormalized derivatives of conf + alpha * loc are written into them.
template <class S>
ImageLoss<S> image_multibox_terms(const Eigen::Ref<const HeadMatrix<S>>& offsets,
                                  const Eigen::Ref<const HeadMatrix<S>>& logits,
                                  const MatchAssignment& m, const LossOptions& opt,
                                  Eigen::Ref<HeadMatrix<S>> d_offsets,
                                  Eigen::Ref<HeadMatrix<S>> d_logits, bool want_grad) {
  const Eigen::Index P = offsets.rows();
  if (offsets.cols() != 4 || logits.rows() != P || static_cast<std::size_t>(P) != m.size()) {
    throw std::invalid_argument("multibox_loss: head shapes do not match the prior list");
  }
  ImageLoss<S> out;
  out.num_positive = m.num_positive;
  if (want_grad) {
    d_offsets.setZero();
    d_logits.setZero();
  }
  if (m.num_positive == 0) return out;

  // Row-wise log-sum-exp of the class logits.
  const Eigen::Matrix<S, Eigen::Dynamic, 1> row_max = logits.rowwise().maxCoeff();
  const Eigen::Matrix<S, Eigen::Dynamic, 1> lse =
      row_max.array() +
      (logits.colwise() - row_max).array().exp().rowwise().sum().log();

  const S alpha = static_cast<S>(opt.alpha);
  double conf = 0.0, loc = 0.0;
  std::vector<Eigen::Index> negatives;
  negatives.reserve(static_cast<std::size_t>(P));
  for (Eigen::Index p = 0; p < P; ++p) {
    const int label = m.labels[static_cast<std::size_t>(p)];
    if (label == 0) {
      negatives.push_back(p);
      continue;
    }
    conf += static_cast<double>(lse(p) - logits(p, label));
    for (int k = 0; k < 4; ++k) {
      const S diff = offsets(p, k) - static_cast<S>(m.targets(p, k));
      loc += static_cast<double>(smooth_l1(diff));
      if (want_grad) d_offsets(p, k) = alpha * smooth_l1_grad(diff);
    }
    if (want_grad) {
      d_logits.row(p) = (logits.row(p).array() - lse(p)).exp().matrix();
      d_logits(p, label) -= S(1);
    }
  }

  const auto k_neg = std::min<std::size_t>(
      static_cast<std::size_t>(opt.neg_pos_ratio) * static_cast<std::size_t>(m.num_positive),
      negatives.size());
  auto background_loss = [&](Eigen::Index p) { return lse(p) - logits(p, 0); };
  std::partial_sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(k_neg),
                    negatives.end(), [&](Eigen::Index a, Eigen::Index b) {
                      const S la = background_loss(a), lb = background_loss(b);
                      return la != lb ? la > lb : a < b;
                    });
  for (std::size_t i = 0; i < k_neg; ++i) {
    const Eigen::Index p = negatives[i];
    conf += static_cast<double>(background_loss(p));
    if (want_grad) {
      d_logits.row(p) = (logits.row(p).array() - lse(p)).exp().matrix();
      d_logits(p, 0) -= S(1);
    }
  }
  out.conf = conf;
  out.loc = loc;
  return out;
}

/// Multibox loss over a batch whose head outputs are stacked image-major
/// ((B * P) x 4 offsets, (B * P) x (classes + 1) logits). conf and loc are sums
/// over the batch, n = total positives, total = (conf + alpha * loc) / n, or 0
/// when n = 0. Gradients of `total` are written when requested.
template <class S>
LossBreakdown multibox_loss(const HeadMatrix<S>& offsets, const HeadMatrix<S>& logits,
                            const std::vector<MatchAssignment>& assignments,
                            const LossOptions& opt = {}, HeadMatrix<S>* d_offsets = nullptr,
                            HeadMatrix<S>* d_logits = nullptr) {
  const auto B = static_cast<Eigen::Index>(assignments.size());
  if (B == 0 || offsets.rows() % B != 0 || logits.rows() != offsets.rows()) {
    throw std::invalid_argument("multibox_loss: batch shape mismatch");
  }
  const Eigen::Index P = offsets.rows() / B;
  const bool want_grad = d_offsets != nullptr && d_logits != nullptr;
  HeadMatrix<S> scratch_o, scratch_l;
  if (want_grad) {
    d_offsets->resize(offsets.rows(), offsets.cols());
    d_logits->resize(logits.rows(), logits.cols());
  }
  LossBreakdown lb;
  lb.alpha = opt.alpha;
  int n = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    auto o = offsets.middleRows(b * P, P);
    auto l = logits.middleRows(b * P, P);
    ImageLoss<S> il;
    if (want_grad) {
      il = image_multibox_terms<S>(o, l, assignments[static_cast<std::size_t>(b)], opt,
                                   d_offsets->middleRows(b * P, P),
                                   d_logits->middleRows(b * P, P), true);
    } else {
      scratch_o.resize(0, 4);
      scratch_l.resize(0, logits.cols());
      il = image_multibox_terms<S>(o, l, assignments[static_cast<std::size_t>(b)], opt,
                                   scratch_o, scratch_l, false);
    }
    lb.conf += il.conf;
    lb.loc += il.loc;
    n += il.num_positive;
  }
  lb.n = n;
  if (n == 0) {
    lb.conf = 0.0;
    lb.loc = 0.0;
    lb.total = 0.0;
    if (want_grad) {
      d_offsets->setZero();
      d_logits->setZero();
    }
    return lb;
  }
  lb.total = (lb.conf + opt.alpha * lb.loc) / n;
  if (want_grad) {
    *d_offsets /= static_cast<S>(n);
    *d_logits /= static_cast<S>(n);
  }
  return lb;
}

}  // namespace etc::detector
