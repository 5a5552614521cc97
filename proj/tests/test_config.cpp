#include "etcdet/config.hpp"

#include <doctest.h>

using namespace etc;

namespace {

bool same(const ProjectConfig& a, const ProjectConfig& b) {
  return a.data_dir == b.data_dir && a.seed == b.seed && a.split_ratio == b.split_ratio &&
         a.tracker.max_step_km == b.tracker.max_step_km && a.tracker.min_frames == b.tracker.min_frames &&
         a.augment.crop_min_iou == b.augment.crop_min_iou && a.priors.scales == b.priors.scales &&
         a.priors.feature_map_sizes == b.priors.feature_map_sizes && a.train == b.train &&
         a.eval.iou_threshold == b.eval.iou_threshold && a.infer.top_k == b.infer.top_k &&
         a.service.port == b.service.port;
}

std::string message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const auto cfg = parse_config("");
  CHECK(same(cfg, ProjectConfig{}));
  CHECK(cfg.infer.score_threshold == 0.01);
}

TEST_CASE("the shipped example spells out the defaults") {
  const auto cfg = load_config(ETCDET_SOURCE_DIR "/config/example.toml");
  auto want = ProjectConfig{};
  want.data_dir = std::filesystem::path(ETCDET_SOURCE_DIR "/config") / "data";
  CHECK(same(cfg, want));
}

TEST_CASE("values override defaults and the seed reaches every stage") {
  const auto cfg = parse_config(R"(
[data]
seed = 42
split_ratio = 0
[tracker]
min_frames = 6
[train]
optimizer = "adam"
lr = 1
iterations = 2000
[augment]
crop_min_iou = [0.5]
crop_any_window = false
[eval]
interpolation = "11-point"
)");
  CHECK(cfg.seed == 42);
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.augment.seed == 42);
  CHECK(cfg.split_ratio == 0.0);
  CHECK(cfg.tracker.min_frames == 6);
  CHECK(cfg.train.optimizer == detector::OptimizerKind::Adam);
  CHECK(cfg.train.lr == 1.0);  // integer accepted for a float
  CHECK(cfg.augment.crop_min_iou == std::vector<std::optional<double>>{0.5});
  CHECK(cfg.eval.interpolation == Interpolation::ElevenPoint);
}

TEST_CASE("crop_any_window alone keeps the default thresholds") {
  const auto cfg = parse_config("[augment]\ncrop_any_window = false\n");
  CHECK(cfg.augment.crop_min_iou.size() == 5);
  CHECK(cfg.augment.crop_min_iou.back() == 0.9);
}

TEST_CASE("unknown sections and keys are rejected by name") {
  CHECK(message("[trainer]\nlr = 1\n").find("trainer") != std::string::npos);
  CHECK(message("[train]\nlearning_rate = 1\n").find("train.learning_rate") != std::string::npos);
  CHECK(message("stray = 1\n").find("stray") != std::string::npos);
}

TEST_CASE("type and range errors") {
  CHECK(message("[train]\nbatch = \"five\"\n").find("train.batch") != std::string::npos);
  CHECK(message("[train]\nbatch = 0\n").find("[train]") != std::string::npos);
  CHECK(message("[tracker]\nmax_step_km = -1\n").find("[tracker]") != std::string::npos);
  CHECK(message("[tracker]\nhemisphere = \"south\"\n").find("hemisphere") != std::string::npos);
  CHECK(message("[priors]\nscales = [0.5, 0.2, 0.7, 0.9]\n").find("[priors]") != std::string::npos);
  CHECK(message("[priors]\nfeature_map_sizes = [1.5]\n").find("priors.feature_map_sizes") != std::string::npos);
  CHECK(message("[data]\nsplit_ratio = 1.0\n").find("split_ratio") != std::string::npos);
  CHECK(message("[service]\nport = 70000\n").find("[service]") != std::string::npos);
  CHECK(message("[eval]\ninterpolation = \"cubic\"\n").find("interpolation") != std::string::npos);
  CHECK(message("[train]\noptimizer = \"lbfgs\"\n").find("optimizer") != std::string::npos);
}

TEST_CASE("syntax errors carry the line") {
  CHECK(message("[data]\nseed = = 3\n").find("line 2") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/etcdet.toml"), std::exception);
}
