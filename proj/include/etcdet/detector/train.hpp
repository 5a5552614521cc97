#pragma once

#include "etcdet/augment.hpp"
#include "etcdet/detector/box_coding.hpp"
#include "etcdet/detector/infer.hpp"
#include "etcdet/detector/model.hpp"
#include "etcdet/detector/multibox_loss.hpp"
#include "etcdet/eval.hpp"
#include "etcdet/image.hpp"
#include "etcdet/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace etc::detector {

#ifndef ETCDET_REAL
#define ETCDET_REAL double
#endif
/// Scalar type of the training build.
using Real = ETCDET_REAL;

enum class OptimizerKind { SGD, Adam };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  int iterations = 240000;
  double lr = 3e-4;
  int batch = 5;
  double alpha = 1.0;
  int neg_pos_ratio = 3;
  double match_iou = 0.5;
  std::uint64_t seed = 0;
  int log_every = 100;
  OptimizerKind optimizer = OptimizerKind::SGD;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

struct TrainSample {
  Gray8 image;
  std::vector<LabeledBox> boxes;
};

struct LossRecord {
  int iteration = 0;
  double conf = 0.0;
  double loc = 0.0;
  double total = 0.0;
};

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& trace);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam moment estimates, one pair per parameter tensor.
template <class S>
struct AdamState {
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;
  std::int64_t t = 0;
};

template <class S>
void adam_step(MiniSSD<S>& model, AdamState<S>& st, const std::vector<Mat<S>>& grads,
               const TrainConfig& cfg) {
  auto& params = model.parameters();
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (const auto& p : params) {
      st.m.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
      st.v.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++st.t;
  const S b1 = static_cast<S>(cfg.adam_beta1), b2 = static_cast<S>(cfg.adam_beta2);
  const S c1 = S(1) - static_cast<S>(std::pow(cfg.adam_beta1, static_cast<double>(st.t)));
  const S c2 = S(1) - static_cast<S>(std::pow(cfg.adam_beta2, static_cast<double>(st.t)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.adam_eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * grads[i];
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * grads[i].cwiseProduct(grads[i]);
    params[i].value.array() -=
        lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + eps);
  }
}

/// Owns a model during training: epoch-shuffled batches, the augmentation
/// chain, the multibox loss and the optimizer step. Every piece of state that
/// influences later steps is checkpointed.
template <class S>
class Trainer {
 public:
  Trainer(ModelConfig model_cfg, TrainConfig cfg, AugmentConfig augment,
          const std::vector<TrainSample>& data)
      : cfg_(cfg),
        augment_(std::move(augment)),
        data_(&data),
        model_(std::move(model_cfg), cfg.seed),
        priors_(generate_priors(model_.config().priors)),
        rng_(cfg.seed ^ 0x9E3779B97F4A7C15ULL) {
    cfg_.validate();
    augment_.output_size = model_.config().input_size;
    augment_.validate();
    if (data.empty()) throw TrainingError("training needs a non-empty dataset");
  }

  const MiniSSD<S>& model() const { return model_; }
  MiniSSD<S>& model() { return model_; }
  const std::vector<PriorBox>& priors() const { return priors_; }
  const TrainConfig& config() const { return cfg_; }
  const AugmentConfig& augment_config() const { return augment_; }
  int iteration() const { return iteration_; }

  /// One optimizer step on the next batch.
  LossRecord step() {
    const int B = cfg_.batch;
    std::vector<Sample> batch;
    batch.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      const auto& src = (*data_)[next_index()];
      batch.push_back(augment_sample(Sample{to_float(src.image), src.boxes}, augment_, rng_));
    }
    std::vector<const ImageF*> images;
    std::vector<MatchAssignment> assignments;
    for (const auto& s : batch) {
      images.push_back(&s.image);
      assignments.push_back(match_priors(priors_, s.boxes, cfg_.match_iou));
    }
    ForwardCache<S> cache;
    const auto out = model_.forward(model_.pack(images), B, &cache);
    Mat<S> d_off, d_log;
    const auto loss = multibox_loss<S>(out.offsets, out.logits, assignments,
                                       {cfg_.alpha, cfg_.neg_pos_ratio}, &d_off, &d_log);
    ++iteration_;
    if (!std::isfinite(loss.total) || !d_off.allFinite() || !d_log.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << iteration_ << " (conf=" << loss.conf
          << ", loc=" << loss.loc << ", n=" << loss.n << "); step aborted";
      throw TrainingError(msg.str());
    }
    const auto grads = model_.backward(cache, d_off, d_log);
    if (cfg_.optimizer == OptimizerKind::SGD) {
      sgd_step(model_, grads, cfg_.lr);
    } else {
      adam_step(model_, adam_, grads, cfg_);
    }
    return {iteration_, loss.conf, loss.loc, loss.total};
  }

  /// Runs until `iterations` total steps, reporting every log_every steps.
  std::vector<LossRecord> run(int iterations,
                              const std::function<void(const LossRecord&)>& on_log = {}) {
    std::vector<LossRecord> trace;
    while (iteration_ < iterations) {
      trace.push_back(step());
      if (on_log && cfg_.log_every > 0 && iteration_ % cfg_.log_every == 0) on_log(trace.back());
    }
    return trace;
  }

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores a checkpoint written by save_checkpoint; training then continues
  /// exactly as if it had never stopped (given the same dataset).
  static Trainer load_checkpoint(const std::filesystem::path& path,
                                 const std::vector<TrainSample>& data);

 private:
  std::size_t next_index() {
    if (cursor_ >= order_.size()) {
      order_.resize(data_->size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  TrainConfig cfg_;
  AugmentConfig augment_;
  const std::vector<TrainSample>* data_;
  MiniSSD<S> model_;
  std::vector<PriorBox> priors_;
  Rng rng_;
  AdamState<S> adam_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int iteration_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint container: "ETCK", u16 version, u8 scalar bytes, u32 + JSON
// metadata (configs, RNG state, sampler position), u32 tensor count, then per
// tensor u16 name length, name, u32 rows, u32 cols, column-major values.

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;  // widened for transport; exact for float and double
};

struct CheckpointData {
  int scalar_bytes = 8;
  nlohmann::json meta;
  std::vector<CheckpointTensor> tensors;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

template <class S>
CheckpointTensor to_checkpoint_tensor(const std::string& name, const Mat<S>& m) {
  CheckpointTensor t{name, static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), {}};
  t.values.assign(m.data(), m.data() + m.size());
  return t;
}

template <class S>
Mat<S> from_checkpoint_tensor(const CheckpointTensor& t) {
  Mat<S> m(t.rows, t.cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(t.values[static_cast<std::size_t>(i)]);
  return m;
}

template <class S>
void Trainer<S>::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointData data;
  data.scalar_bytes = sizeof(S);
  std::ostringstream rng_state;
  rng_state << rng_;
  data.meta = {{"model", to_json(model_.config())},
               {"train", to_json(cfg_)},
               {"augment", to_json(augment_)},
               {"iteration", iteration_},
               {"rng", rng_state.str()},
               {"order", order_},
               {"cursor", cursor_},
               {"adam_t", adam_.t},
               {"dataset_size", data_->size()}};
  const auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    data.tensors.push_back(to_checkpoint_tensor(params[i].name, params[i].value));
  }
  for (std::size_t i = 0; i < adam_.m.size(); ++i) {
    data.tensors.push_back(to_checkpoint_tensor("adam.m." + params[i].name, adam_.m[i]));
    data.tensors.push_back(to_checkpoint_tensor("adam.v." + params[i].name, adam_.v[i]));
  }
  write_checkpoint_file(path, data);
}

template <class S>
Trainer<S> Trainer<S>::load_checkpoint(const std::filesystem::path& path,
                                       const std::vector<TrainSample>& data) {
  const auto ck = read_checkpoint_file(path);
  if (ck.scalar_bytes != static_cast<int>(sizeof(S))) {
    throw CheckpointError("checkpoint was written by a " + std::to_string(ck.scalar_bytes * 8) +
                          "-bit build");
  }
  Trainer<S> t(model_config_from_json(ck.meta.at("model")),
               train_config_from_json(ck.meta.at("train")),
               augment_config_from_json(ck.meta.at("augment")), data);
  if (ck.meta.at("dataset_size").get<std::size_t>() != data.size()) {
    throw CheckpointError("checkpoint was trained on a dataset of a different size");
  }
  t.iteration_ = ck.meta.at("iteration").get<int>();
  std::istringstream rng_state(ck.meta.at("rng").get<std::string>());
  rng_state >> t.rng_;
  t.order_ = ck.meta.at("order").get<std::vector<std::size_t>>();
  t.cursor_ = ck.meta.at("cursor").get<std::size_t>();
  t.adam_.t = ck.meta.at("adam_t").get<std::int64_t>();
  auto& params = t.model_.parameters();
  std::size_t k = 0;
  for (auto& p : params) {
    if (k >= ck.tensors.size() || ck.tensors[k].name != p.name) {
      throw CheckpointError("checkpoint is missing tensor " + p.name);
    }
    Mat<S> v = from_checkpoint_tensor<S>(ck.tensors[k++]);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw CheckpointError("checkpoint tensor " + p.name + " has the wrong shape");
    }
    p.value = std::move(v);
  }
  if (k < ck.tensors.size()) {
    for (const auto& p : params) {
      t.adam_.m.push_back(from_checkpoint_tensor<S>(ck.tensors.at(k++)));
      t.adam_.v.push_back(from_checkpoint_tensor<S>(ck.tensors.at(k++)));
      if (t.adam_.m.back().rows() != p.value.rows()) {
        throw CheckpointError("checkpoint optimizer state does not match " + p.name);
      }
    }
  }
  return t;
}

/// Loads only the model weights of a checkpoint.
template <class S>
MiniSSD<S> load_model(const std::filesystem::path& path) {
  const auto ck = read_checkpoint_file(path);
  MiniSSD<S> model(model_config_from_json(ck.meta.at("model")));
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i >= ck.tensors.size() || ck.tensors[i].name != params[i].name) {
      throw CheckpointError("checkpoint is missing tensor " + params[i].name);
    }
    params[i].value = from_checkpoint_tensor<S>(ck.tensors[i]);
  }
  return model;
}


/// Trains a fresh model for cfg.iterations steps.
template <class S>
MiniSSD<S> train(const std::vector<TrainSample>& data, const ModelConfig& model_cfg,
                 const TrainConfig& cfg, const AugmentConfig& augment,
                 std::vector<LossRecord>* trace = nullptr,
                 const std::function<void(const LossRecord&)>& on_log = {}) {
  Trainer<S> trainer(model_cfg, cfg, augment, data);
  auto t = trainer.run(cfg.iterations, on_log);
  if (trace) *trace = std::move(t);
  return std::move(trainer.model());
}

/// Runs inference on every sample (resized to the model input) and scores it.
template <class S>
std::vector<APResult> evaluate_model(const MiniSSD<S>& model, const std::vector<TrainSample>& data,
                                     const InferConfig& infer_cfg, const EvalSettings& settings,
                                     int batch = 8) {
  const auto priors = generate_priors(model.config().priors);
  std::vector<ImageDetections> dets;
  std::vector<ImageGroundTruth> gts;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch));
    std::vector<Sample> samples;
    for (std::size_t i = start; i < end; ++i) {
      samples.push_back(preprocess_eval(Sample{to_float(data[i].image), data[i].boxes},
                                        model.config().input_size));
    }
    std::vector<const ImageF*> images;
    for (const auto& s : samples) images.push_back(&s.image);
    const auto out = infer_batch(model, priors, images, infer_cfg);
    for (std::size_t i = start; i < end; ++i) {
      ImageDetections d;
      d.image = static_cast<int>(i);
      for (const auto& det : out[i - start]) {
        d.boxes.push_back({det.box, det.stage});
        d.scores.push_back(det.score);
      }
      dets.push_back(std::move(d));
      gts.push_back({static_cast<int>(i), data[i].boxes});
    }
  }
  return evaluate_detections(dets, gts, settings);
}

}  // namespace etc::detector
