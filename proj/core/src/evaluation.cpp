#include "cva/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace cva {

using nlohmann::json;

std::string to_string(EvalMode m) {
  return m == EvalMode::class_aware ? "class-aware" : "class-agnostic";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "class-agnostic") return EvalMode::class_agnostic;
  if (s == "class-aware") return EvalMode::class_aware;
  throw std::invalid_argument("unknown evaluation mode '" + s + "'");
}

std::array<double, 10> iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (50.0 + 5.0 * static_cast<double>(i)) / 100.0;
  return t;
}

bool operator==(const PrPoint& a, const PrPoint& b) {
  return a.recall == b.recall && a.precision == b.precision;
}
bool operator==(const ThresholdResult& a, const ThresholdResult& b) {
  return a.iou_threshold == b.iou_threshold && a.ap == b.ap && a.curve == b.curve &&
         a.interpolated == b.interpolated;
}
bool operator==(const VideoBreakdown& a, const VideoBreakdown& b) {
  return a.video_id == b.video_id && a.ap == b.ap && a.ap50 == b.ap50 && a.ap75 == b.ap75 &&
         a.ground_truths == b.ground_truths && a.detections == b.detections;
}

ThresholdResult average_precision(std::span<const ScoredBox> detections,
                                  std::span<const ScoredBox> ground_truth, double threshold) {
  ThresholdResult out;
  out.iou_threshold = threshold;
  if (ground_truth.empty()) return out;

  std::map<std::size_t, std::vector<std::size_t>> gt_by_image;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) gt_by_image[ground_truth[g].image].push_back(g);
  std::vector<char> taken(ground_truth.size(), 0);

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  const double npos = static_cast<double>(ground_truth.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  out.curve.reserve(order.size());
  for (std::size_t d : order) {
    const auto& det = detections[d];
    long best = -1;
    double best_iou = threshold;
    if (auto it = gt_by_image.find(det.image); it != gt_by_image.end()) {
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double v = iou(det.box, ground_truth[g].box);
        if (v >= best_iou) {
          if (best < 0 || v > best_iou) {
            best = static_cast<long>(g);
            best_iou = v;
          }
        }
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      ++tp;
    } else {
      ++fp;
    }
    out.curve.push_back({static_cast<double>(tp) / npos,
                         static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }

  // Precision envelope, then read it at each recall level.
  std::vector<double> envelope(out.curve.size());
  double running = 0.0;
  for (std::size_t i = out.curve.size(); i-- > 0;) {
    running = std::max(running, out.curve[i].precision);
    envelope[i] = running;
  }
  double total = 0.0;
  for (std::size_t r = 0; r < out.interpolated.size(); ++r) {
    const double level = static_cast<double>(r) / 100.0;
    auto it = std::lower_bound(out.curve.begin(), out.curve.end(), level,
                               [](const PrPoint& p, double v) { return p.recall < v; });
    const double p = it == out.curve.end() ? 0.0 : envelope[static_cast<std::size_t>(it - out.curve.begin())];
    out.interpolated[r] = p;
    total += p;
  }
  out.ap = total / static_cast<double>(out.interpolated.size());
  return out;
}

namespace {

struct Scene {
  std::vector<ScoredBox> detections;
  std::vector<ScoredBox> ground_truth;
  std::vector<LesionClass> det_class;
  std::vector<LesionClass> gt_class;
};

ThresholdResult scene_ap(const Scene& scene, double threshold, EvalMode mode) {
  if (mode == EvalMode::class_agnostic) {
    return average_precision(scene.detections, scene.ground_truth, threshold);
  }
  ThresholdResult out;
  out.iou_threshold = threshold;
  std::size_t classes_with_gt = 0;
  for (LesionClass c : {LesionClass::benign, LesionClass::malignant}) {
    std::vector<ScoredBox> dets, gts;
    for (std::size_t i = 0; i < scene.detections.size(); ++i)
      if (scene.det_class[i] == c) dets.push_back(scene.detections[i]);
    for (std::size_t i = 0; i < scene.ground_truth.size(); ++i)
      if (scene.gt_class[i] == c) gts.push_back(scene.ground_truth[i]);
    if (gts.empty()) continue;
    ++classes_with_gt;
    ThresholdResult r = average_precision(dets, gts, threshold);
    out.ap += r.ap;
    out.curve.insert(out.curve.end(), r.curve.begin(), r.curve.end());
    for (std::size_t k = 0; k < out.interpolated.size(); ++k) out.interpolated[k] += r.interpolated[k];
  }
  if (classes_with_gt > 0) {
    const double n = static_cast<double>(classes_with_gt);
    out.ap /= n;
    for (auto& v : out.interpolated) v /= n;
  }
  return out;
}

struct Summary {
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
  std::vector<ThresholdResult> thresholds;
};

Summary summarize(const Scene& scene, EvalMode mode) {
  Summary s;
  for (double t : iou_thresholds()) {
    s.thresholds.push_back(scene_ap(scene, t, mode));
    s.ap += s.thresholds.back().ap;
  }
  s.ap /= static_cast<double>(s.thresholds.size());
  s.ap50 = s.thresholds[0].ap;
  s.ap75 = s.thresholds[5].ap;
  return s;
}

void add_frame(Scene& scene, std::size_t key, const VideoSample& v, std::size_t frame,
               const FramePrediction* pred) {
  for (const auto& b : v.boxes[frame]) {
    scene.ground_truth.push_back({key, b, 0.0});
    scene.gt_class.push_back(v.label);
  }
  if (!pred) return;
  for (std::size_t i = 0; i < pred->boxes.size(); ++i) {
    scene.detections.push_back({key, pred->boxes[i], pred->scores[i]});
    scene.det_class.push_back(pred->classes[i]);
  }
}

}  // namespace

EvalReport evaluate(std::span<const FramePrediction> predictions,
                    std::span<const VideoSample* const> videos, EvalMode mode) {
  std::map<std::string, std::size_t> video_index;
  for (std::size_t i = 0; i < videos.size(); ++i) video_index.emplace(videos[i]->id, i);

  // (video, frame) -> prediction
  std::map<std::pair<std::size_t, std::size_t>, const FramePrediction*> lookup;
  for (const auto& p : predictions) {
    auto it = video_index.find(p.video_id);
    if (it == video_index.end()) throw EvaluationError("prediction for unknown video '" + p.video_id + "'");
    if (p.frame >= videos[it->second]->frame_count()) {
      throw EvaluationError("prediction for unknown frame " + std::to_string(p.frame) + " of video '" +
                            p.video_id + "'");
    }
    if (p.scores.size() != p.boxes.size() || p.classes.size() != p.boxes.size()) {
      throw EvaluationError("malformed prediction for video '" + p.video_id + "' frame " +
                            std::to_string(p.frame));
    }
    if (!lookup.emplace(std::make_pair(it->second, p.frame), &p).second) {
      throw EvaluationError("duplicate prediction for video '" + p.video_id + "' frame " +
                            std::to_string(p.frame));
    }
  }

  EvalReport report;
  report.mode = mode;
  Scene all;
  std::size_t key = 0;
  for (std::size_t vi = 0; vi < videos.size(); ++vi) {
    const VideoSample& v = *videos[vi];
    Scene one;
    for (std::size_t f = 0; f < v.frame_count(); ++f, ++key) {
      auto it = lookup.find({vi, f});
      const FramePrediction* p = it == lookup.end() ? nullptr : it->second;
      add_frame(all, key, v, f, p);
      add_frame(one, key, v, f, p);
    }
    const Summary s = summarize(one, mode);
    report.per_video.push_back({v.id, s.ap, s.ap50, s.ap75, one.ground_truth.size(), one.detections.size()});
  }
  Summary s = summarize(all, mode);
  report.ap = s.ap;
  report.ap50 = s.ap50;
  report.ap75 = s.ap75;
  report.thresholds = std::move(s.thresholds);
  report.ground_truths = all.ground_truth.size();
  report.detections = all.detections.size();

  const bool labeled = std::any_of(predictions.begin(), predictions.end(),
                                   [](const FramePrediction& p) { return p.video_label.has_value(); });
  if (labeled && !videos.empty()) report.classification_accuracy = classification_accuracy(predictions, videos);
  return report;
}

EvalReport evaluate(std::span<const FramePrediction> predictions, const Dataset& ds, EvalMode mode) {
  const auto test = ds.split(Split::test);
  return evaluate(predictions, test, mode);
}

double classification_accuracy(std::span<const FramePrediction> predictions,
                               std::span<const VideoSample* const> videos) {
  if (videos.empty()) throw EvaluationError("classification accuracy over zero videos");
  std::map<std::string, std::array<std::size_t, 2>> votes;
  for (const auto& p : predictions) {
    if (p.video_label) ++votes[p.video_id][static_cast<std::size_t>(*p.video_label)];
  }
  std::size_t correct = 0;
  for (const VideoSample* v : videos) {
    auto it = votes.find(v->id);
    if (it == votes.end()) throw EvaluationError("no video-level prediction for video '" + v->id + "'");
    const auto& c = it->second;
    const LesionClass voted = c[1] > c[0] ? LesionClass::malignant : LesionClass::benign;
    if (voted == v->label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(videos.size());
}

json EvalReport::to_json() const {
  json j;
  j["mode"] = to_string(mode);
  j["AP"] = ap;
  j["AP50"] = ap50;
  j["AP75"] = ap75;
  j["ground_truths"] = ground_truths;
  j["detections"] = detections;
  if (classification_accuracy) j["classification_accuracy"] = *classification_accuracy;
  json ts = json::array();
  for (const auto& t : thresholds) {
    json curve = json::array();
    for (const auto& p : t.curve) curve.push_back({p.recall, p.precision});
    ts.push_back({{"iou", t.iou_threshold}, {"ap", t.ap}, {"pr", curve}, {"interpolated", t.interpolated}});
  }
  j["thresholds"] = ts;
  json pv = json::array();
  for (const auto& v : per_video) {
    pv.push_back({{"video_id", v.video_id}, {"AP", v.ap}, {"AP50", v.ap50}, {"AP75", v.ap75},
                  {"ground_truths", v.ground_truths}, {"detections", v.detections}});
  }
  j["per_video"] = pv;
  return j;
}

std::string EvalReport::to_table(const std::string& row_label) const {
  const std::size_t width = std::max<std::size_t>(row_label.size(), 5);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "" << std::right << std::setw(7) << "AP"
     << std::setw(7) << "AP50" << std::setw(7) << "AP75" << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << row_label << std::right << std::fixed
     << std::setprecision(1) << std::setw(7) << ap * 100.0 << std::setw(7) << ap50 * 100.0
     << std::setw(7) << ap75 * 100.0 << '\n';
  return os.str();
}

}  // namespace cva
