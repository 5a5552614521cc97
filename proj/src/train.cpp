#include "etcdet/detector/train.hpp"

#include "etcdet/io.hpp"

#include <bit>
#include <cstring>
#include <ostream>

namespace etc::detector {

using nlohmann::json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (iterations < 0 || batch <= 0 || !(lr >= 0.0) || !(alpha >= 0.0) || neg_pos_ratio < 0 ||
      !(match_iou > 0.0 && match_iou < 1.0)) {
    throw std::invalid_argument("train config out of range");
  }
}

json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations}, {"lr", c.lr},
          {"batch", c.batch},           {"alpha", c.alpha},
          {"neg_pos_ratio", c.neg_pos_ratio}, {"match_iou", c.match_iou},
          {"seed", c.seed},             {"log_every", c.log_every},
          {"optimizer", to_string(c.optimizer)}, {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.neg_pos_ratio = j.at("neg_pos_ratio").get<int>();
  c.match_iou = j.at("match_iou").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.log_every = j.at("log_every").get<int>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

json to_json(const ModelConfig& c) {
  json backbone = json::array();
  for (const auto& b : c.backbone) {
    backbone.push_back({{"out_channels", b.out_channels}, {"kernel", b.kernel},
                        {"stride", b.stride}, {"pad", b.pad}});
  }
  return {{"input_size", c.input_size},
          {"backbone", backbone},
          {"head_sources", c.head_sources},
          {"head_kernel", c.head_kernel},
          {"num_classes", c.num_classes},
          {"priors",
           {{"feature_map_sizes", c.priors.feature_map_sizes},
            {"scales", c.priors.scales},
            {"aspect_ratios", c.priors.aspect_ratios},
            {"clip", c.priors.clip}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.backbone.clear();
  for (const auto& b : j.at("backbone")) {
    c.backbone.push_back({b.at("out_channels").get<int>(), b.at("kernel").get<int>(),
                          b.at("stride").get<int>(), b.at("pad").get<int>()});
  }
  c.head_sources = j.at("head_sources").get<std::vector<int>>();
  c.head_kernel = j.at("head_kernel").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  const auto& p = j.at("priors");
  c.priors.feature_map_sizes = p.at("feature_map_sizes").get<std::vector<int>>();
  c.priors.scales = p.at("scales").get<std::vector<double>>();
  c.priors.aspect_ratios = p.at("aspect_ratios").get<std::vector<double>>();
  c.priors.clip = p.at("clip").get<bool>();
  c.validate();
  return c;
}

json to_json(const AugmentConfig& c) {
  json ious = json::array();
  for (const auto& t : c.crop_min_iou) ious.push_back(t ? json(*t) : json("any"));
  return {{"brightness_delta", c.brightness_delta}, {"contrast_lo", c.contrast_lo},
          {"contrast_hi", c.contrast_hi},           {"photometric_prob", c.photometric_prob},
          {"crop_min_iou", ious},                   {"crop_min_scale", c.crop_min_scale},
          {"crop_attempts", c.crop_attempts},       {"mirror_prob", c.mirror_prob},
          {"output_size", c.output_size},           {"seed", c.seed}};
}

AugmentConfig augment_config_from_json(const json& j) {
  AugmentConfig c;
  c.brightness_delta = j.at("brightness_delta").get<double>();
  c.contrast_lo = j.at("contrast_lo").get<double>();
  c.contrast_hi = j.at("contrast_hi").get<double>();
  c.photometric_prob = j.at("photometric_prob").get<double>();
  c.crop_min_iou.clear();
  for (const auto& t : j.at("crop_min_iou")) {
    if (t.is_string()) {
      c.crop_min_iou.push_back(std::nullopt);
    } else {
      c.crop_min_iou.push_back(t.get<double>());
    }
  }
  c.crop_min_scale = j.at("crop_min_scale").get<double>();
  c.crop_attempts = j.at("crop_attempts").get<int>();
  c.mirror_prob = j.at("mirror_prob").get<double>();
  c.output_size = j.at("output_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& trace) {
  out << "iteration,conf,loc,total\n";
  out.precision(17);
  for (const auto& r : trace) {
    out << r.iteration << ',' << r.conf << ',' << r.loc << ',' << r.total << '\n';
  }
}

namespace {

constexpr char kMagic[4] = {'E', 'T', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw CheckpointError("checkpoint is truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    if (pos + n > bytes.size()) throw CheckpointError("checkpoint is truncated");
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(data.scalar_bytes));
  const std::string meta = data.meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, t.rows);
    put<std::uint32_t>(out, t.cols);
    for (double v : t.values) {
      if (data.scalar_bytes == 4) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  write_file_atomic(path, out);
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  Reader r{bytes, 4};
  if (r.get<std::uint16_t>() != kVersion) throw CheckpointError("unsupported checkpoint version");
  CheckpointData data;
  data.scalar_bytes = r.get<std::uint8_t>();
  if (data.scalar_bytes != 4 && data.scalar_bytes != 8) {
    throw CheckpointError("checkpoint scalar width must be 4 or 8 bytes");
  }
  data.meta = json::parse(r.str(r.get<std::uint32_t>()));
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str(r.get<std::uint16_t>());
    t.rows = r.get<std::uint32_t>();
    t.cols = r.get<std::uint32_t>();
    const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
    t.values.resize(n);
    for (auto& v : t.values) v = data.scalar_bytes == 4 ? r.get<float>() : r.get<double>();
    data.tensors.push_back(std::move(t));
  }
  return data;
}

}  // namespace etc::detector
