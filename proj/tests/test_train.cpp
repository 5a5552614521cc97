#include "etcdet/detector/train.hpp"
#include "etcdet/synth.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace etc;
using namespace etc::detector;
namespace fs = std::filesystem;

namespace {

std::vector<TrainSample> tiny_dataset(std::size_t per_class, std::uint64_t seed) {
  SynthDatasetOptions opt;
  opt.canvas = 48;
  opt.min_size = 0.18;
  opt.max_size = 0.25;
  const auto ds = gen_dataset({per_class, per_class, per_class}, seed, opt);
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < ds.images.size(); ++i) out.push_back({ds.images[i], ds.manifest.entries[i].boxes});
  return out;
}

TrainConfig small_config(OptimizerKind opt) {
  TrainConfig c;
  c.iterations = 30;
  c.lr = opt == OptimizerKind::Adam ? 3e-3 : 1e-2;
  c.batch = 3;
  c.seed = 5;
  c.optimizer = opt;
  return c;
}

}  // namespace

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
  const auto data = tiny_dataset(4, 1);
  const auto dir = fs::temp_directory_path() / "etcdet_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (auto kind : {OptimizerKind::SGD, OptimizerKind::Adam}) {
    INFO(to_string(kind));
    const auto cfg = small_config(kind);
    Trainer<Real> straight(ModelConfig::reduced(), cfg, {}, data);
    const auto full = straight.run(20);

    Trainer<Real> first(ModelConfig::reduced(), cfg, {}, data);
    first.run(7);  // stops mid-epoch
    first.save_checkpoint(dir / "mid.etck");
    auto resumed = Trainer<Real>::load_checkpoint(dir / "mid.etck", data);
    CHECK(resumed.iteration() == 7);
    const auto rest = resumed.run(20);
    REQUIRE(rest.size() == 13);
    for (std::size_t i = 0; i < rest.size(); ++i) {
      CHECK(rest[i].iteration == full[i + 7].iteration);
      CHECK(rest[i].total == full[i + 7].total);
    }
    const auto& a = straight.model().parameters();
    const auto& b = resumed.model().parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);

    const auto weights = load_model<Real>(dir / "mid.etck");
    CHECK(weights.parameters()[0].value == first.model().parameters()[0].value);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects a different dataset and corrupt files") {
  const auto data = tiny_dataset(3, 2);
  const auto dir = fs::temp_directory_path() / "etcdet_test_ckpt_bad";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Trainer<Real> t(ModelConfig::reduced(), small_config(OptimizerKind::SGD), {}, data);
  t.run(2);
  t.save_checkpoint(dir / "a.etck");
  const auto other = tiny_dataset(4, 2);
  CHECK_THROWS_AS(Trainer<Real>::load_checkpoint(dir / "a.etck", other), CheckpointError);

  {
    std::ofstream f(dir / "junk.etck", std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS(read_checkpoint_file(dir / "junk.etck"));
  const auto size = fs::file_size(dir / "a.etck");
  fs::resize_file(dir / "a.etck", size / 2);
  CHECK_THROWS(read_checkpoint_file(dir / "a.etck"));
  fs::remove_all(dir);
}

TEST_CASE("training reduces the loss on a fixed batch") {
  const auto data = tiny_dataset(5, 3);
  auto cfg = small_config(OptimizerKind::Adam);
  cfg.batch = static_cast<int>(data.size());
  AugmentConfig aug;
  // No augmentation: every step sees the same batch.
  aug.photometric_prob = 0.0;
  aug.mirror_prob = 0.0;
  aug.crop_min_iou.clear();
  Trainer<Real> t(ModelConfig::reduced(), cfg, aug, data);
  const auto trace = t.run(150);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += trace[static_cast<std::size_t>(i)].total;
    tail += trace[trace.size() - 1 - static_cast<std::size_t>(i)].total;
  }
  CHECK(tail < 0.7 * head);
}

TEST_CASE("same seed, same run") {
  const auto data = tiny_dataset(3, 4);
  const auto cfg = small_config(OptimizerKind::Adam);
  std::vector<LossRecord> a, b;
  train<Real>(data, ModelConfig::reduced(), cfg, {}, &a);
  train<Real>(data, ModelConfig::reduced(), cfg, {}, &b);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].total == b[i].total);
}

TEST_CASE("config validation and JSON") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(train_config_from_json(to_json(c)) == c);
  c.optimizer = OptimizerKind::Adam;
  c.lr = 1e-3;
  CHECK(train_config_from_json(to_json(c)) == c);
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  CHECK(parse_optimizer("adam") == OptimizerKind::Adam);
  CHECK(parse_optimizer("sgd") == OptimizerKind::SGD);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), std::invalid_argument);

  const auto m = ModelConfig::reduced();
  CHECK(model_config_from_json(to_json(m)) == m);

  AugmentConfig a;
  const auto back = augment_config_from_json(to_json(a));
  CHECK(back.crop_min_iou == a.crop_min_iou);
  CHECK(back.brightness_delta == a.brightness_delta);
}

TEST_CASE("trainer rejects an empty dataset") {
  std::vector<TrainSample> none;
  CHECK_THROWS_AS(Trainer<Real>(ModelConfig::reduced(), TrainConfig{}, {}, none), TrainingError);
}

TEST_CASE("loss CSV") {
  std::ostringstream out;
  write_loss_csv(out, {{100, 1.5, 0.5, 2.0}});
  CHECK(out.str().rfind("iteration,conf,loc,total\n", 0) == 0);
  CHECK(out.str().find("100,1.5,0.5,2") != std::string::npos);
}
