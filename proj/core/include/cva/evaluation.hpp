#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cva/box.hpp"
#include "cva/dataset.hpp"
#include "cva/predictions.hpp"

namespace cva {

enum class EvalMode {
  /// Any detection may match any ground truth; classification is scored separately.
  class_agnostic,
  /// Detections only match ground truth of their own class; AP averaged over classes.
  class_aware,
};

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> iou_thresholds();

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ThresholdResult {
  double iou_threshold = 0.0;
  double ap = 0.0;
  /// Raw curve, one point per detection in score order (class-agnostic mode;
  /// concatenated per class in class-aware mode).
  std::vector<PrPoint> curve;
  /// Interpolated precision at recall 0, 0.01, ..., 1 (class mean in class-aware mode).
  std::array<double, 101> interpolated{};
};

struct VideoBreakdown {
  std::string video_id;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::size_t ground_truths = 0;
  std::size_t detections = 0;
};

struct EvalReport {
  EvalMode mode = EvalMode::class_agnostic;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<ThresholdResult> thresholds;
  std::vector<VideoBreakdown> per_video;
  std::size_t ground_truths = 0;
  std::size_t detections = 0;
  std::optional<double> classification_accuracy;

  nlohmann::json to_json() const;
  /// AP, AP50, AP75 scaled by 100 with one decimal, aligned columns.
  std::string to_table(const std::string& row_label = "model") const;
  bool operator==(const EvalReport&) const = default;
};

bool operator==(const PrPoint& a, const PrPoint& b);
bool operator==(const ThresholdResult& a, const ThresholdResult& b);
bool operator==(const VideoBreakdown& a, const VideoBreakdown& b);

/// One detection or ground truth entry for the scene-level AP routine.
struct ScoredBox {
  std::size_t image = 0;  // frame key
  Box box;
  double score = 0.0;     // ignored for ground truth
};

/// COCO-style AP at one IoU threshold: detections sorted by descending score
/// (ties keep input order), each greedily matched to the highest-IoU unmatched
/// ground truth in its image with IoU >= threshold; 101-point interpolation.
/// Returns 0 when there is no ground truth.
ThresholdResult average_precision(std::span<const ScoredBox> detections,
                                  std::span<const ScoredBox> ground_truth, double threshold);

/// Evaluates frame predictions against `videos`. Every prediction must name a
/// frame of one of these videos. Frames without a prediction count as empty.
EvalReport evaluate(std::span<const FramePrediction> predictions,
                    std::span<const VideoSample* const> videos,
                    EvalMode mode = EvalMode::class_agnostic);
/// Same, against the test split of `ds`.
EvalReport evaluate(std::span<const FramePrediction> predictions, const Dataset& ds,
                    EvalMode mode = EvalMode::class_agnostic);

/// Majority vote of per-frame video labels for each video, compared to the
/// true label. Ties go to benign. Throws if a video has no labeled prediction.
double classification_accuracy(std::span<const FramePrediction> predictions,
                               std::span<const VideoSample* const> videos);

}  // namespace cva
