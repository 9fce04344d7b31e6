#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cva/box.hpp"
#include "cva/head.hpp"
#include "cva/video.hpp"

namespace cva {

/// Detections for one frame, boxes in pixel corners. One JSON line each:
///   {"video_id", "frame", "boxes": [[x1,y1,x2,y2],...], "scores": [...],
///    "classes": ["benign"|"malignant", ...], "video_label": "benign"|"malignant"}
/// `video_label` is optional.
struct FramePrediction {
  std::string video_id;
  std::size_t frame = 0;
  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<LesionClass> classes;
  std::optional<LesionClass> video_label;

  bool operator==(const FramePrediction&) const = default;
};

class PredictionFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Detections below this score are not exported.
inline constexpr double kMinExportScore = 0.05;

/// Converts query outputs to pixel-space detections sorted by descending score.
/// score = (1 - p(no-object)) * max(p(benign), p(malignant)); boxes are clipped
/// to the frame and dropped if they collapse.
FramePrediction make_frame_prediction(const DetectionSet& detections,
                                      const std::optional<VideoPrediction>& video,
                                      const std::string& video_id, std::size_t frame,
                                      std::size_t height, std::size_t width,
                                      double min_score = kMinExportScore);

std::string to_json_line(const FramePrediction& p);
FramePrediction parse_prediction_line(const std::string& line);

void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> preds);
std::vector<FramePrediction> read_predictions(const std::filesystem::path& path);

}  // namespace cva
