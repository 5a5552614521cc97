#include "etcdet/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace etc {

std::vector<PRPoint> pr_curve(const std::vector<ScoredBox>& detections,
                              const std::vector<GtBox>& ground_truth, double iou_threshold,
                              MatchTally* tally) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::map<int, std::vector<std::size_t>> gt_by_image;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    gt_by_image[ground_truth[g].image].push_back(g);
  }
  std::vector<bool> matched(ground_truth.size(), false);
  const double num_gt = static_cast<double>(ground_truth.size());

  std::vector<PRPoint> curve;
  curve.reserve(order.size());
  std::size_t tp = 0, fp = 0;
  for (auto d : order) {
    const auto& det = detections[d];
    double best = -1.0;
    std::ptrdiff_t best_g = -1;
    if (auto it = gt_by_image.find(det.image); it != gt_by_image.end()) {
      for (auto g : it->second) {
        if (matched[g]) continue;
        const double o = iou(det.box, ground_truth[g].box);
        if (o >= iou_threshold && o > best) {
          best = o;
          best_g = static_cast<std::ptrdiff_t>(g);
        }
      }
    }
    if (best_g >= 0) {
      matched[static_cast<std::size_t>(best_g)] = true;
      ++tp;
    } else {
      ++fp;
    }
    PRPoint p;
    p.recall = num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.score = det.score;
    curve.push_back(p);
  }
  if (tally) *tally = {tp, fp, ground_truth.size(), detections.size()};
  return curve;
}

std::vector<ImageDetections> detections_from_jsonl(std::string_view text) {
  std::vector<ImageDetections> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ImageDetections d;
      d.image = j.at("frame").get<int>();
      for (const auto& b : j.at("boxes")) {
        const auto stage = parse_stage(b.at("stage").get<std::string>());
        if (!stage) throw std::invalid_argument("unknown stage " + b.at("stage").dump());
        d.boxes.push_back({{b.at("xmin").get<double>(), b.at("ymin").get<double>(),
                            b.at("xmax").get<double>(), b.at("ymax").get<double>()},
                           *stage});
        d.scores.push_back(b.at("score").get<double>());
      }
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw std::invalid_argument("detections line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string detections_to_jsonl(const std::vector<ImageDetections>& dets) {
  std::string out;
  for (const auto& d : dets) {
    nlohmann::json boxes = nlohmann::json::array();
    for (std::size_t k = 0; k < d.boxes.size(); ++k) {
      const auto& b = d.boxes[k].box;
      boxes.push_back({{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax}, {"ymax", b.ymax},
                       {"stage", std::string(to_string(d.boxes[k].stage))}, {"score", d.scores[k]}});
    }
    out += nlohmann::json{{"frame", d.image}, {"boxes", boxes}}.dump();
    out += '\n';
  }
  return out;
}

std::string to_string(Interpolation mode) {
  return mode == Interpolation::AllPoint ? "all-point" : "11-point";
}

std::optional<Interpolation> parse_interpolation(const std::string& s) {
  if (s == "all-point" || s == "allpoint" || s == "continuous") return Interpolation::AllPoint;
  if (s == "11-point" || s == "11point" || s == "voc2007") return Interpolation::ElevenPoint;
  return std::nullopt;
}

double average_precision(const std::vector<PRPoint>& curve, Interpolation mode) {
  if (curve.empty()) return 0.0;
  // Suffix maximum of precision gives the interpolated envelope at each point.
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  if (mode == Interpolation::ElevenPoint) {
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i].recall >= r) {
          p = envelope[i];
          break;
        }
      }
      ap += p / 11.0;
    }
    return ap;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].recall > prev_recall) {
      ap += (curve[i].recall - prev_recall) * envelope[i];
      prev_recall = curve[i].recall;
    }
  }
  return ap;
}

double mean_ap(const std::vector<APResult>& results) {
  if (results.empty()) throw std::invalid_argument("mean_ap needs at least one class");
  double sum = 0.0;
  for (const auto& r : results) sum += r.ap;
  return sum / static_cast<double>(results.size());
}

std::vector<APResult> evaluate_detections(const std::vector<ImageDetections>& detections,
                                          const std::vector<ImageGroundTruth>& ground_truth,
                                          const EvalSettings& settings) {
  std::vector<APResult> results;
  for (int c = 0; c < kNumStages; ++c) {
    const auto stage = static_cast<StageClass>(c);
    std::vector<GtBox> gts;
    for (const auto& img : ground_truth) {
      for (const auto& lb : img.boxes) {
        if (lb.stage == stage) gts.push_back({img.image, lb.box});
      }
    }
    if (gts.empty()) continue;
    std::vector<ScoredBox> dets;
    for (const auto& img : detections) {
      for (std::size_t k = 0; k < img.boxes.size(); ++k) {
        if (img.boxes[k].stage == stage) dets.push_back({img.image, img.boxes[k].box, img.scores[k]});
      }
    }
    APResult r;
    r.label = std::string(to_string(stage));
    r.curve = pr_curve(dets, gts, settings.iou_threshold, &r.tally);
    r.ap = average_precision(r.curve, settings.interpolation);
    results.push_back(std::move(r));
  }
  return results;
}

void write_report_csv(std::ostream& out, const std::vector<APResult>& results,
                      const EvalSettings& settings) {
  out << "# iou_threshold=" << settings.iou_threshold
      << ",interpolation=" << to_string(settings.interpolation) << '\n';
  out << "class,ap,num_gt,num_det\n";
  for (const auto& r : results) {
    out << r.label << ',' << r.ap << ',' << r.tally.num_gt << ',' << r.tally.num_det << '\n';
  }
  if (!results.empty()) out << "mAP," << mean_ap(results) << ",,\n";
}

void write_curves_csv(std::ostream& out, const std::vector<APResult>& results) {
  out << "class,recall,precision,score\n";
  for (const auto& r : results) {
    for (const auto& p : r.curve) {
      out << r.label << ',' << p.recall << ',' << p.precision << ',' << p.score << '\n';
    }
  }
}

}  // namespace etc
