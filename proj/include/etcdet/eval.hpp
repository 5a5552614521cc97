#pragma once

#include "etcdet/box.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace etc {

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

/// One detection of a single class on one image.
struct ScoredBox {
  int image = 0;
  BoundingBox box;
  double score = 0.0;
};

struct GtBox {
  int image = 0;
  BoundingBox box;
};

struct MatchTally {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
};

/// Greedy score-ordered matching for one class. A detection takes the
/// highest-IoU still-unmatched ground truth on its image with IoU >= threshold
/// (true positive) or is a false positive. Equal scores keep input order.
std::vector<PRPoint> pr_curve(const std::vector<ScoredBox>& detections,
                              const std::vector<GtBox>& ground_truth, double iou_threshold = 0.5,
                              MatchTally* tally = nullptr);

enum class Interpolation { AllPoint, ElevenPoint };

std::string to_string(Interpolation mode);
std::optional<Interpolation> parse_interpolation(const std::string& s);

/// Area under the interpolated precision envelope p(r) = max precision at
/// recall >= r. An empty curve yields 0.
double average_precision(const std::vector<PRPoint>& curve,
                         Interpolation mode = Interpolation::AllPoint);

struct APResult {
  std::string label;
  double ap = 0.0;
  std::vector<PRPoint> curve;
  MatchTally tally;
};

/// Unweighted mean; throws std::invalid_argument for an empty list.
double mean_ap(const std::vector<APResult>& results);

/// Detections and ground truth of one image, all classes together.
struct ImageDetections {
  int image = 0;
  std::vector<LabeledBox> boxes;
  std::vector<double> scores;
};

struct ImageGroundTruth {
  int image = 0;
  std::vector<LabeledBox> boxes;
};

/// Prediction files: one line per image,
/// {"frame": i, "boxes": [{"xmin", "ymin", "xmax", "ymax", "stage", "score"}]}.
std::vector<ImageDetections> detections_from_jsonl(std::string_view text);
std::string detections_to_jsonl(const std::vector<ImageDetections>& dets);

struct EvalSettings {
  double iou_threshold = 0.5;
  Interpolation interpolation = Interpolation::AllPoint;
};

/// Per-class AP for every stage that has ground truth, in stage order.
std::vector<APResult> evaluate_detections(const std::vector<ImageDetections>& detections,
                                          const std::vector<ImageGroundTruth>& ground_truth,
                                          const EvalSettings& settings = {});

/// CSV: a "# iou_threshold=..,interpolation=.." line, a header, then class,ap,num_gt,num_det.
void write_report_csv(std::ostream& out, const std::vector<APResult>& results,
                      const EvalSettings& settings);
/// CSV of class,recall,precision,score for plotting.
void write_curves_csv(std::ostream& out, const std::vector<APResult>& results);

}  // namespace etc
