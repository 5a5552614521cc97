#pragma once

#include "etcdet/detector/priors.hpp"
#include "etcdet/image.hpp"
#include "etcdet/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace etc::detector {

struct ConvSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  bool operator==(const ConvSpec&) const = default;
};

/// Fixed MiniSSD architecture: a chain of ReLU conv blocks, with linear 3x3
/// detection heads on the blocks listed in head_sources.
struct ModelConfig {
  int input_size = 300;
  std::vector<ConvSpec> backbone{
      {8, 3, 2, 1}, {16, 3, 2, 1}, {32, 3, 2, 1}, {48, 3, 2, 0},
      {64, 3, 2, 1}, {64, 3, 2, 1}, {64, 3, 2, 1}};
  std::vector<int> head_sources{3, 4, 5, 6};
  int head_kernel = 3;
  int num_classes = 3;
  PriorConfig priors;

  int num_logits() const { return num_classes + 1; }
  /// Spatial side after each backbone block.
  std::vector<int> feature_sizes() const;
  /// Throws std::invalid_argument if heads do not land on the prior map sizes.
  void validate() const;

  /// A few-hundred-parameter variant on 24x24 inputs for finite-difference checks.
  static ModelConfig reduced();

  bool operator==(const ModelConfig& o) const {
    return input_size == o.input_size && backbone == o.backbone &&
           head_sources == o.head_sources && head_kernel == o.head_kernel &&
           num_classes == o.num_classes &&
           priors.feature_map_sizes == o.priors.feature_map_sizes &&
           priors.scales == o.priors.scales && priors.aspect_ratios == o.priors.aspect_ratios &&
           priors.clip == o.priors.clip;
  }
};

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Geometry of one convolution applied to a batch.
struct ConvShape {
  int in_channels = 0;
  int in_size = 0;
  int out_size = 0;
  ConvSpec spec;

  int rows() const { return spec.kernel * spec.kernel * in_channels; }
};

/// Unrolls (C, B*H*W) activations into (k*k*C, B*Ho*Wo) patch columns. Row index
/// is (ky * k + kx) * C + c; column index b * Ho*Wo + y * Wo + x.
template <class S>
void im2col(const Mat<S>& in, const ConvShape& sh, int batch, Mat<S>& cols) {
  const int C = sh.in_channels, H = sh.in_size, Ho = sh.out_size, k = sh.spec.kernel;
  const int s = sh.spec.stride, p = sh.spec.pad;
  cols.resize(sh.rows(), static_cast<Eigen::Index>(batch) * Ho * Ho);
  S* dst = cols.data();
  const S* src = in.data();
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Ho; ++x) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y * s - p + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = x * s - p + kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= H) {
              std::fill(dst, dst + C, S(0));
            } else {
              const S* col = src + (static_cast<std::ptrdiff_t>(b) * H * H + iy * H + ix) * C;
              std::copy(col, col + C, dst);
            }
            dst += C;
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch-column gradients back onto activations.
template <class S>
void col2im(const Mat<S>& cols, const ConvShape& sh, int batch, Mat<S>& in_grad) {
  const int C = sh.in_channels, H = sh.in_size, Ho = sh.out_size, k = sh.spec.kernel;
  const int s = sh.spec.stride, p = sh.spec.pad;
  in_grad = Mat<S>::Zero(C, static_cast<Eigen::Index>(batch) * H * H);
  const S* src = cols.data();
  S* dst = in_grad.data();
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Ho; ++x) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y * s - p + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = x * s - p + kx;
            if (iy >= 0 && iy < H && ix >= 0 && ix < H) {
              S* col = dst + (static_cast<std::ptrdiff_t>(b) * H * H + iy * H + ix) * C;
              for (int c = 0; c < C; ++c) col[c] += src[c];
            }
            src += C;
          }
        }
      }
    }
  }
}

inline int conv_out_size(int in, const ConvSpec& s) {
  return (in + 2 * s.pad - s.kernel) / s.stride + 1;
}

template <class S>
struct Tensor {
  std::string name;
  Mat<S> value;
};

/// Stacked head outputs for a batch: rows are image-major, prior-minor.
template <class S>
struct HeadOutput {
  Mat<S> offsets;  // (B * P) x 4
  Mat<S> logits;   // (B * P) x (classes + 1)
  int batch = 0;
};

/// Activations kept by forward for the backward pass.
template <class S>
struct ForwardCache {
  int batch = 0;
  std::vector<Mat<S>> cols;         // im2col of each backbone block input
  std::vector<Mat<S>> activations;  // post-ReLU output of each backbone block
  std::vector<Mat<S>> head_cols;    // im2col of each head input
};

/// Toy-scale single-shot detector with analytically coded gradients.
template <class S>
class MiniSSD {
 public:
  explicit MiniSSD(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_shapes();
    initialize(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Tensor<S>>& parameters() { return params_; }
  const std::vector<Tensor<S>>& parameters() const { return params_; }
  int num_priors() const { return cfg_.priors.num_priors(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  /// He-style uniform weights, zero biases, background logit bias +2.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    params_.clear();
    auto add_conv = [&](const std::string& name, int out, int fan_in) {
      const double bound = std::sqrt(6.0 / fan_in);
      Mat<S> w(out, fan_in);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(uniform(rng, -bound, bound));
      }
      params_.push_back({name + ".weight", std::move(w)});
      params_.push_back({name + ".bias", Mat<S>::Zero(out, 1)});
    };
    for (std::size_t l = 0; l < backbone_.size(); ++l) {
      add_conv("backbone." + std::to_string(l), backbone_[l].spec.out_channels,
               backbone_[l].rows());
    }
    const int A = cfg_.priors.priors_per_cell();
    const int K = cfg_.num_logits();
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      add_conv("head." + std::to_string(h), A * (4 + K), heads_[h].rows());
      Mat<S>& bias = params_.back().value;
      for (int a = 0; a < A; ++a) bias(a * (4 + K) + 4, 0) = S(2);
    }
  }

  /// Packs float images into the (1, B*H*W) input layout.
  Mat<S> pack(std::span<const ImageF* const> images) const {
    const int n = cfg_.input_size;
    Mat<S> x(1, static_cast<Eigen::Index>(images.size()) * n * n);
    for (std::size_t b = 0; b < images.size(); ++b) {
      const ImageF& img = *images[b];
      if (img.rows() != n || img.cols() != n) {
        throw std::invalid_argument("MiniSSD: input must be " + std::to_string(n) + "x" +
                                    std::to_string(n));
      }
      for (Eigen::Index i = 0; i < img.size(); ++i) {
        x(0, static_cast<Eigen::Index>(b) * n * n + i) = static_cast<S>(img.data()[i]);
      }
    }
    return x;
  }

  HeadOutput<S> forward(const Mat<S>& input, int batch, ForwardCache<S>* cache = nullptr) const {
    const int n = cfg_.input_size;
    if (input.rows() != 1 || input.cols() != static_cast<Eigen::Index>(batch) * n * n) {
      throw std::invalid_argument("MiniSSD::forward: input shape mismatch");
    }
    ForwardCache<S> local;
    ForwardCache<S>& c = cache ? *cache : local;
    c.batch = batch;
    c.cols.resize(backbone_.size());
    c.activations.resize(backbone_.size());
    c.head_cols.resize(heads_.size());

    const Mat<S>* x = &input;
    for (std::size_t l = 0; l < backbone_.size(); ++l) {
      im2col(*x, backbone_[l], batch, c.cols[l]);
      const auto& w = params_[2 * l].value;
      const auto& bias = params_[2 * l + 1].value;
      c.activations[l].noalias() = w * c.cols[l];
      c.activations[l].colwise() += bias.col(0);
      c.activations[l] = c.activations[l].cwiseMax(S(0));
      x = &c.activations[l];
    }

    const int A = cfg_.priors.priors_per_cell();
    const int K = cfg_.num_logits();
    const int P = num_priors();
    HeadOutput<S> out;
    out.batch = batch;
    out.offsets.resize(static_cast<Eigen::Index>(batch) * P, 4);
    out.logits.resize(static_cast<Eigen::Index>(batch) * P, K);
    int prior_offset = 0;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const auto& src = c.activations[static_cast<std::size_t>(cfg_.head_sources[h])];
      im2col(src, heads_[h], batch, c.head_cols[h]);
      const std::size_t pi = 2 * (backbone_.size() + h);
      Mat<S> y = params_[pi].value * c.head_cols[h];
      y.colwise() += params_[pi + 1].value.col(0);
      const int hw = heads_[h].out_size * heads_[h].out_size;
      for (int b = 0; b < batch; ++b) {
        for (int pos = 0; pos < hw; ++pos) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * hw + pos;
          for (int a = 0; a < A; ++a) {
            const Eigen::Index row = static_cast<Eigen::Index>(b) * P + prior_offset + pos * A + a;
            const int base = a * (4 + K);
            for (int k = 0; k < 4; ++k) out.offsets(row, k) = y(base + k, col);
            for (int k = 0; k < K; ++k) out.logits(row, k) = y(base + 4 + k, col);
          }
        }
      }
      prior_offset += hw * A;
    }
    if (!cache) local = {};
    return out;
  }

  /// Gradients of a scalar loss with respect to every parameter, given its
  /// gradients with respect to the head outputs of the cached forward pass.
  std::vector<Mat<S>> backward(const ForwardCache<S>& c, const Mat<S>& d_offsets,
                               const Mat<S>& d_logits) const {
    const int batch = c.batch;
    const int A = cfg_.priors.priors_per_cell();
    const int K = cfg_.num_logits();
    const int P = num_priors();
    std::vector<Mat<S>> grads(params_.size());
    std::vector<Mat<S>> d_act(backbone_.size());
    for (std::size_t l = 0; l < backbone_.size(); ++l) {
      d_act[l] = Mat<S>::Zero(c.activations[l].rows(), c.activations[l].cols());
    }

    int prior_offset = 0;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const int hw = heads_[h].out_size * heads_[h].out_size;
      Mat<S> dy(A * (4 + K), static_cast<Eigen::Index>(batch) * hw);
      for (int b = 0; b < batch; ++b) {
        for (int pos = 0; pos < hw; ++pos) {
          const Eigen::Index col = static_cast<Eigen::Index>(b) * hw + pos;
          for (int a = 0; a < A; ++a) {
            const Eigen::Index row = static_cast<Eigen::Index>(b) * P + prior_offset + pos * A + a;
            const int base = a * (4 + K);
            for (int k = 0; k < 4; ++k) dy(base + k, col) = d_offsets(row, k);
            for (int k = 0; k < K; ++k) dy(base + 4 + k, col) = d_logits(row, k);
          }
        }
      }
      prior_offset += hw * A;
      const std::size_t pi = 2 * (backbone_.size() + h);
      grads[pi].noalias() = dy * c.head_cols[h].transpose();
      grads[pi + 1] = dy.rowwise().sum();
      Mat<S> dcols = params_[pi].value.transpose() * dy;
      Mat<S> dsrc;
      col2im(dcols, heads_[h], batch, dsrc);
      d_act[static_cast<std::size_t>(cfg_.head_sources[h])] += dsrc;
    }

    for (std::size_t l = backbone_.size(); l-- > 0;) {
      // ReLU: pass gradient only where the output was positive.
      Mat<S> dz = (c.activations[l].array() > S(0)).select(d_act[l], S(0));
      grads[2 * l].noalias() = dz * c.cols[l].transpose();
      grads[2 * l + 1] = dz.rowwise().sum();
      if (l == 0) break;
      Mat<S> dcols = params_[2 * l].value.transpose() * dz;
      Mat<S> dprev;
      col2im(dcols, backbone_[l], batch, dprev);
      d_act[l - 1] += dprev;
    }
    return grads;
  }

 private:
  void build_shapes() {
    const auto sizes = cfg_.feature_sizes();
    int channels = 1;
    int size = cfg_.input_size;
    for (std::size_t l = 0; l < cfg_.backbone.size(); ++l) {
      backbone_.push_back({channels, size, sizes[l], cfg_.backbone[l]});
      channels = cfg_.backbone[l].out_channels;
      size = sizes[l];
    }
    const int k = cfg_.head_kernel;
    for (int src : cfg_.head_sources) {
      const auto& b = backbone_[static_cast<std::size_t>(src)];
      heads_.push_back({b.spec.out_channels, b.out_size, b.out_size, {0, k, 1, k / 2}});
    }
  }

  ModelConfig cfg_;
  std::vector<ConvShape> backbone_;
  std::vector<ConvShape> heads_;
  std::vector<Tensor<S>> params_;
};

/// theta <- theta - lr * g.
template <class S>
void sgd_step(MiniSSD<S>& model, const std::vector<Mat<S>>& grads, double lr) {
  auto& params = model.parameters();
  if (grads.size() != params.size()) throw std::invalid_argument("sgd_step: gradient count mismatch");
  const S step = static_cast<S>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value -= step * grads[i];
}

}  // namespace etc::detector
