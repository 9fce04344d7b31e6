#include "cva/predictions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace cva {

using nlohmann::json;

FramePrediction make_frame_prediction(const DetectionSet& detections,
                                      const std::optional<VideoPrediction>& video,
                                      const std::string& video_id, std::size_t frame,
                                      std::size_t height, std::size_t width, double min_score) {
  struct Candidate {
    Box box;
    double score;
    LesionClass cls;
  };
  std::vector<Candidate> found;
  const auto boxes = detections.boxes.data();
  for (std::size_t q = 0; q < detections.size(); ++q) {
    const auto p = detections.probabilities(q);
    const bool malignant = p[1] > p[0];
    const double score = (1.0 - p[kNoObject]) * std::max(p[0], p[1]);
    if (score < min_score) continue;
    Box b = to_corners(CenterBox{boxes[q * 4], boxes[q * 4 + 1], boxes[q * 4 + 2], boxes[q * 4 + 3]});
    b.x1 = std::clamp(b.x1, 0.0, 1.0);
    b.y1 = std::clamp(b.y1, 0.0, 1.0);
    b.x2 = std::clamp(b.x2, 0.0, 1.0);
    b.y2 = std::clamp(b.y2, 0.0, 1.0);
    b = to_pixels(b, static_cast<double>(width), static_cast<double>(height));
    if (!b.valid()) continue;
    found.push_back({b, score, malignant ? LesionClass::malignant : LesionClass::benign});
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  FramePrediction out;
  out.video_id = video_id;
  out.frame = frame;
  for (const auto& c : found) {
    out.boxes.push_back(c.box);
    out.scores.push_back(c.score);
    out.classes.push_back(c.cls);
  }
  if (video) {
    const auto p = video->probabilities();
    out.video_label = p[1] > p[0] ? LesionClass::malignant : LesionClass::benign;
  }
  return out;
}

std::string to_json_line(const FramePrediction& p) {
  json j;
  j["video_id"] = p.video_id;
  j["frame"] = p.frame;
  json boxes = json::array();
  for (const auto& b : p.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
  j["boxes"] = boxes;
  j["scores"] = p.scores;
  json classes = json::array();
  for (auto c : p.classes) classes.push_back(to_string(c));
  j["classes"] = classes;
  if (p.video_label) j["video_label"] = to_string(*p.video_label);
  return j.dump();
}

FramePrediction parse_prediction_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw PredictionFormatError(std::string("prediction record is not valid JSON: ") + e.what());
  }
  auto fail = [&](const std::string& why) {
    throw PredictionFormatError("malformed prediction record (" + why + "): " + line);
  };
  if (!j.is_object()) fail("not an object");
  for (const char* key : {"video_id", "frame", "boxes", "scores", "classes"}) {
    if (!j.contains(key)) fail(std::string("missing '") + key + "'");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "video_id" && key != "frame" && key != "boxes" && key != "scores" &&
        key != "classes" && key != "video_label") {
      fail("unknown key '" + key + "'");
    }
  }
  FramePrediction p;
  try {
    p.video_id = j.at("video_id").get<std::string>();
    if (!j.at("frame").is_number_unsigned()) fail("frame must be a non-negative integer");
    p.frame = j.at("frame").get<std::size_t>();
    for (const auto& b : j.at("boxes")) {
      if (!b.is_array() || b.size() != 4) fail("box must have 4 coordinates");
      p.boxes.push_back(Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    p.scores = j.at("scores").get<std::vector<double>>();
    for (const auto& c : j.at("classes")) p.classes.push_back(lesion_class_from_string(c.get<std::string>()));
    if (j.contains("video_label")) {
      p.video_label = lesion_class_from_string(j.at("video_label").get<std::string>());
    }
  } catch (const json::exception& e) {
    fail(e.what());
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (p.scores.size() != p.boxes.size() || p.classes.size() != p.boxes.size()) {
    fail("boxes, scores and classes differ in length");
  }
  for (const auto& b : p.boxes) {
    if (!b.valid()) fail("degenerate box " + to_string(b));
  }
  for (double s : p.scores) {
    if (!std::isfinite(s)) fail("non-finite score");
  }
  return p;
}

void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> preds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions to " + path.string());
  for (const auto& p : preds) out << to_json_line(p) << '\n';
}

std::vector<FramePrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read predictions from " + path.string());
  std::vector<FramePrediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_prediction_line(line));
  }
  return out;
}

}  // namespace cva
