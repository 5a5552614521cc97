#pragma once

#include "etcdet/augment.hpp"
#include "etcdet/cyclone_track.hpp"
#include "etcdet/detector/infer.hpp"
#include "etcdet/detector/priors.hpp"
#include "etcdet/detector/train.hpp"
#include "etcdet/eval.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace etc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int page_size = 50;
};

struct ProjectConfig {
  std::filesystem::path data_dir = "data";
  std::uint64_t seed = 0;
  TrackerConfig tracker;
  AugmentConfig augment;
  detector::PriorConfig priors;
  detector::TrainConfig train;
  detector::InferConfig infer{0.01, 0.45, 200};
  EvalSettings eval;
  double split_ratio = 0.2;
  ServiceConfig service;

  /// Pushes the project seed into every stochastic stage.
  void apply_seed(std::uint64_t s);
  detector::ModelConfig model() const;
  /// Throws ConfigError naming the first invalid section.
  void validate() const;
};

/// Parses TOML text. Unknown sections or keys are rejected; missing keys keep
/// their defaults. Relative data_dir values resolve against `base_dir`.
ProjectConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ProjectConfig load_config(const std::filesystem::path& path);

}  // namespace etc
