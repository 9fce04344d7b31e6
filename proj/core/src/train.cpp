#include "cva/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "cva/adam.hpp"
#include "cva/augment.hpp"
#include "cva/losses.hpp"
#include "cva/ops.hpp"
#include "cva/seed.hpp"

namespace cva {

using nlohmann::json;

namespace {

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream tags for derive_seed.
enum : std::uint64_t { kTagOrder = 1, kTagShuffle, kTagSample, kTagSampleKind, kTagStream, kTagModel };

FrameTargets targets_for(std::span<const Box> boxes, LesionClass label, std::size_t h, std::size_t w) {
  FrameTargets t;
  for (const auto& b : boxes) {
    t.boxes.push_back(to_center(to_normalized(b, static_cast<double>(w), static_cast<double>(h))));
    t.classes.push_back(static_cast<std::size_t>(label));
  }
  return t;
}

void check_wiring(const ModelConfig& config, const ClipForward& f) {
  if (!uses_inter(config.variant)) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (!f.inter[j].equals(f.local[j])) throw std::logic_error("inter fusion disabled but P != L");
    }
  }
  if (!uses_intra(config.variant) && !f.intra.equals(f.inter[1])) {
    throw std::logic_error("intra fusion disabled but Q != P_k");
  }
}

constexpr std::array<AugmentKind, 4> kSampleTransforms{AugmentKind::none, AugmentKind::horizontal_flip,
                                                       AugmentKind::resize, AugmentKind::random_crop};

}  // namespace

ShufflePlan inference_plan(const VideoSample& v) {
  return ShufflePlan::random(v.frame_count(), derive_seed(id_hash(v.id), {kTagShuffle}));
}

std::vector<FramePrediction> predict(const CvaNet& model, std::span<const VideoSample* const> videos) {
  NoGradGuard no_grad;
  std::vector<FramePrediction> out;
  for (const VideoSample* v : videos) {
    const ShufflePlan plan = inference_plan(*v);
    for (std::size_t k = 0; k < v->frame_count(); ++k) {
      const Clip clip = sample_clip(*v, k, plan);
      const ClipForward f = model.forward(clip.frames, clip.shuffled);
      out.push_back(make_frame_prediction(f.detections, f.video, v->id, k, v->height(), v->width()));
    }
  }
  return out;
}

TrainResult train(const RunConfig& config, const Dataset& ds, const TrainHooks& hooks) {
  config.validate();
  const auto train_videos = ds.split(Split::train);
  const auto test_videos = ds.split(Split::test);
  if (train_videos.empty()) throw TrainingError("dataset has no training videos");
  const std::size_t height = train_videos.front()->height();
  const std::size_t width = train_videos.front()->width();
  for (const VideoSample* v : ds.split(Split::train)) validate(*v);

  const auto started = std::chrono::steady_clock::now();
  const ModelConfig model_config = config.model_for(height, width);
  auto model = std::make_unique<CvaNet>(model_config, derive_seed(config.seed, {kTagModel}));
  Adam adam(model->params(), config.adam());
  std::vector<Tensor> params = model->params().tensors();

  RunRecord record;
  record.config = config;
  record.config_hash = config_hash(config);

  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t v = 0; v < train_videos.size(); ++v) {
    for (std::size_t k = 0; k < train_videos[v]->frame_count(); ++k) positions.emplace_back(v, k);
  }

  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    Rng order_rng(derive_seed(config.seed, {kTagOrder, epoch}));
    std::shuffle(positions.begin(), positions.end(), order_rng);
    std::vector<ShufflePlan> plans;
    for (std::size_t v = 0; v < train_videos.size(); ++v) {
      plans.push_back(ShufflePlan::random(train_videos[v]->frame_count(),
                                          derive_seed(config.seed, {kTagShuffle, epoch, v})));
    }

    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& [vi, k] : positions) {
      if (config.max_steps && step >= config.max_steps) {
        done = true;
        break;
      }
      const VideoSample& video = *train_videos[vi];
      Clip clip = sample_clip(video, k, plans[vi]);
      std::vector<Box> boxes = clip.boxes;

      if (config.sample_transforms) {
        const std::uint64_t s = derive_seed(config.seed, {kTagSampleKind, step});
        const AugmentKind kind = kSampleTransforms[s % kSampleTransforms.size()];
        if (kind != AugmentKind::none) {
          AugmentResult r = augment(clip.frames, boxes, derive_seed(config.seed, {kTagSample, step}), kind);
          std::move(r.frames.begin(), r.frames.end(), clip.frames.begin());
          boxes = std::move(r.boxes);
        }
      }
      if (config.augmentation != AugmentKind::none) {
        AugmentResult r = augment(clip.shuffled, {}, derive_seed(config.seed, {kTagStream, step}),
                                  config.augmentation);
        std::move(r.frames.begin(), r.frames.end(), clip.shuffled.begin());
      }

      const ClipForward f = model->forward(clip.frames, clip.shuffled);
      check_wiring(model_config, f);
      if (hooks.on_forward) hooks.on_forward(step, f);

      const FrameTargets targets = targets_for(boxes, video.label, height, width);
      const MatchResult match = hungarian_match(matching_cost(f.detections, targets, config.loss_weights));
      DetectionLoss det = detection_loss(f.detections, targets, match, config.loss_weights);
      Tensor total = det.total;
      double video_loss = 0.0;
      if (f.video) {
        Tensor vl = video_class_loss(*f.video, video.label);
        video_loss = vl.item();
        total = add(total, scale(vl, config.loss_weights.video));
      }
      const double loss_value = total.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step));
      }
      model->params().zero_grad();
      backward(total);
      const double norm = clip_grad_norm(params, config.grad_clip);
      if (hooks.after_backward) hooks.after_backward(step, *model);
      if (config.warmup_steps > 0 && step < config.warmup_steps) {
        adam.set_learning_rate(config.learning_rate * static_cast<double>(step + 1) /
                               static_cast<double>(config.warmup_steps));
      } else {
        adam.set_learning_rate(config.learning_rate);
      }
      adam.step();

      record.step_losses.push_back(loss_value);
      stats.total += loss_value;
      stats.classification += det.classification;
      stats.l1 += det.l1;
      stats.giou += det.giou;
      stats.video += video_loss;
      stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
      if (norm > config.grad_clip) ++stats.clipped_steps;
      ++stats.steps;
      ++step;
    }
    if (stats.steps > 0) {
      const double n = static_cast<double>(stats.steps);
      stats.total /= n;
      stats.classification /= n;
      stats.l1 /= n;
      stats.giou /= n;
      stats.video /= n;
      record.epochs.push_back(stats);
      if (hooks.log) {
        *hooks.log << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << stats.total
                   << " cls " << stats.classification << " l1 " << stats.l1 << " giou " << stats.giou
                   << " video " << stats.video << '\n';
        hooks.log->flush();
      }
    }
  }
  record.steps = step;

  if (!test_videos.empty()) {
    const auto preds = predict(*model, test_videos);
    record.report = evaluate(preds, test_videos, config.eval_mode);
  }
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(record), std::move(model)};
}

json RunRecord::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"steps", e.steps},
                           {"total", e.total},
                           {"classification", e.classification},
                           {"l1", e.l1},
                           {"giou", e.giou},
                           {"video", e.video},
                           {"max_grad_norm", e.max_grad_norm},
                           {"clipped_steps", e.clipped_steps}});
  }
  return json{{"config", cva::to_json(config)},
              {"config_hash", config_hash},
              {"grad_clip", config.grad_clip},
              {"steps", steps},
              {"wall_clock_seconds", wall_clock_seconds},
              {"epochs", epochs_json},
              {"step_losses", step_losses},
              {"report", report.to_json()}};
}

Checkpoint make_checkpoint(const CvaNet& model, const RunConfig& config) {
  Checkpoint ckpt;
  ckpt.tensors = model.params().items();
  ckpt.metadata = {{"config", to_json(config)},
                   {"resolution", {model.config().backbone.height, model.config().backbone.width}}};
  return ckpt;
}

void save_model(const std::filesystem::path& path, const CvaNet& model, const RunConfig& config) {
  save_checkpoint(path, make_checkpoint(model, config));
}

LoadedModel load_model(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("config") || !ckpt.metadata.contains("resolution")) {
    throw CheckpointError("checkpoint metadata lacks the run configuration");
  }
  LoadedModel out;
  out.config = run_config_from_json(ckpt.metadata.at("config"));
  const auto res = ckpt.metadata.at("resolution").get<std::vector<std::size_t>>();
  if (res.size() != 2) throw CheckpointError("checkpoint resolution must be [h, w]");
  out.model = std::make_unique<CvaNet>(out.config.model_for(res[0], res[1]), 0);
  out.model->params().assign_from(ckpt.tensors);
  return out;
}

LoadedModel load_model(const std::filesystem::path& path) { return load_model(load_checkpoint(path)); }

}  // namespace cva
