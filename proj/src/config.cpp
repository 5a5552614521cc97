#include "etcdet/config.hpp"

#include "etcdet/io.hpp"

#include <toml.hpp>

#include <set>
#include <sstream>

namespace etc {

void ProjectConfig::apply_seed(std::uint64_t s) {
  seed = s;
  augment.seed = s;
  train.seed = s;
}

detector::ModelConfig ProjectConfig::model() const {
  detector::ModelConfig m;
  m.priors = priors;
  return m;
}

void ProjectConfig::validate() const {
  auto check = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config [") + section + "]: " + e.what());
    }
  };
  check("tracker", [&] { tracker.validate(); });
  check("augment", [&] { augment.validate(); });
  check("priors", [&] { model().validate(); });
  check("train", [&] { train.validate(); });
  if (!(eval.iou_threshold > 0.0 && eval.iou_threshold < 1.0) || !(infer.nms_iou > 0.0) ||
      infer.top_k < 1 || !(infer.score_threshold >= 0.0 && infer.score_threshold < 1.0)) {
    throw ConfigError("config [eval]: thresholds out of range");
  }
  if (!(split_ratio >= 0.0 && split_ratio < 1.0)) throw ConfigError("config [data]: split_ratio must be in [0, 1)");
  if (service.port < 0 || service.port > 65535 || service.page_size < 1) {
    throw ConfigError("config [service]: port or page_size out of range");
  }
}

namespace {

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      out = value<bool>(key, node);
    } else if constexpr (std::is_integral_v<T>) {
      out = static_cast<T>(value<std::int64_t>(key, node));
    } else if constexpr (std::is_floating_point_v<T>) {
      // Integers are accepted where a float is expected.
      if (const auto i = node->value_exact<std::int64_t>()) {
        out = static_cast<T>(*i);
      } else {
        out = value<double>(key, node);
      }
    } else {
      out = value<std::string>(key, node);
    }
  }

  template <class T>
  void read_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    const auto* arr = node->as_array();
    if (!arr) fail(key, "expected an array");
    out.clear();
    for (const auto& el : *arr) {
      if constexpr (std::is_integral_v<T>) {
        const auto v = el.value_exact<std::int64_t>();
        if (!v) fail(key, "expected integers");
        out.push_back(static_cast<T>(*v));
      } else {
        const auto v = el.value<double>();
        if (!v) fail(key, "expected numbers");
        out.push_back(static_cast<T>(*v));
      }
    }
  }

  /// Rejects any key that was never read.
  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("config: unknown key '" + qualified(std::string(k.str())) + "'");
      }
    }
  }

 private:
  template <class T>
  T value(const char* key, const toml::node* node) const {
    const auto v = node->value_exact<T>();
    if (!v) fail(key, "wrong value type");
    return *v;
  }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config: '" + qualified(key) + "': " + what);
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

ProjectConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }

  ProjectConfig cfg;
  static const std::set<std::string> kSections{"data", "tracker", "augment", "priors", "train", "eval", "service"};
  for (const auto& [k, v] : root) {
    if (!kSections.count(std::string(k.str())) || !v.is_table()) {
      throw ConfigError("config: unknown section '" + std::string(k.str()) + "'");
    }
  }

  Section data(root["data"].as_table(), "data");
  std::string dir = cfg.data_dir.string();
  data.read("dir", dir);
  data.read("seed", cfg.seed);
  data.read("split_ratio", cfg.split_ratio);
  data.finish();
  cfg.data_dir = dir;
  if (cfg.data_dir.is_relative() && !base_dir.empty()) cfg.data_dir = base_dir / cfg.data_dir;

  Section tracker(root["tracker"].as_table(), "tracker");
  tracker.read("max_step_km", cfg.tracker.max_step_km);
  tracker.read("min_frames", cfg.tracker.min_frames);
  tracker.read("neighbor_min_deg", cfg.tracker.neighbor_min_deg);
  tracker.read("tropical_flag_lat", cfg.tracker.tropical_flag_lat);
  std::string hemisphere = "north";
  tracker.read("hemisphere", hemisphere);
  if (hemisphere != "north") throw ConfigError("config: 'tracker.hemisphere': only \"north\" is supported");
  tracker.finish();

  Section augment(root["augment"].as_table(), "augment");
  augment.read("brightness_delta", cfg.augment.brightness_delta);
  augment.read("contrast_lo", cfg.augment.contrast_lo);
  augment.read("contrast_hi", cfg.augment.contrast_hi);
  augment.read("photometric_prob", cfg.augment.photometric_prob);
  std::vector<double> ious;
  bool any_window = true;
  augment.read_list("crop_min_iou", ious);
  augment.read("crop_any_window", any_window);
  if (root["augment"]["crop_min_iou"] || root["augment"]["crop_any_window"]) {
    if (!root["augment"]["crop_min_iou"]) {
      ious.clear();
      for (const auto& t : cfg.augment.crop_min_iou) {
        if (t) ious.push_back(*t);
      }
    }
    cfg.augment.crop_min_iou.assign(ious.begin(), ious.end());
    if (any_window) cfg.augment.crop_min_iou.push_back(std::nullopt);
  }
  augment.read("crop_min_scale", cfg.augment.crop_min_scale);
  augment.read("crop_attempts", cfg.augment.crop_attempts);
  augment.read("mirror_prob", cfg.augment.mirror_prob);
  augment.finish();

  Section priors(root["priors"].as_table(), "priors");
  priors.read_list("feature_map_sizes", cfg.priors.feature_map_sizes);
  priors.read_list("scales", cfg.priors.scales);
  priors.read_list("aspect_ratios", cfg.priors.aspect_ratios);
  priors.read("clip", cfg.priors.clip);
  priors.finish();

  Section train(root["train"].as_table(), "train");
  train.read("iterations", cfg.train.iterations);
  train.read("lr", cfg.train.lr);
  train.read("batch", cfg.train.batch);
  train.read("alpha", cfg.train.alpha);
  train.read("neg_pos_ratio", cfg.train.neg_pos_ratio);
  train.read("match_iou", cfg.train.match_iou);
  train.read("log_every", cfg.train.log_every);
  std::string optimizer = to_string(cfg.train.optimizer);
  train.read("optimizer", optimizer);
  train.read("adam_beta1", cfg.train.adam_beta1);
  train.read("adam_beta2", cfg.train.adam_beta2);
  train.read("adam_eps", cfg.train.adam_eps);
  train.finish();
  try {
    cfg.train.optimizer = detector::parse_optimizer(optimizer);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: 'train.optimizer': ") + e.what());
  }

  Section eval(root["eval"].as_table(), "eval");
  eval.read("iou_threshold", cfg.eval.iou_threshold);
  std::string interpolation = to_string(cfg.eval.interpolation);
  eval.read("interpolation", interpolation);
  eval.read("score_threshold", cfg.infer.score_threshold);
  eval.read("nms_iou", cfg.infer.nms_iou);
  eval.read("top_k", cfg.infer.top_k);
  eval.finish();
  const auto mode = parse_interpolation(interpolation);
  if (!mode) throw ConfigError("config: 'eval.interpolation': expected all-point or 11-point");
  cfg.eval.interpolation = *mode;

  Section service(root["service"].as_table(), "service");
  service.read("host", cfg.service.host);
  service.read("port", cfg.service.port);
  service.read("page_size", cfg.service.page_size);
  service.finish();

  cfg.apply_seed(cfg.seed);
  cfg.validate();
  return cfg;
}

ProjectConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file_text(path), path.parent_path());
}

}  // namespace etc
