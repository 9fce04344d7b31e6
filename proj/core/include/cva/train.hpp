#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cva/checkpoint.hpp"
#include "cva/config.hpp"
#include "cva/dataset.hpp"
#include "cva/evaluation.hpp"
#include "cva/model.hpp"
#include "cva/predictions.hpp"

namespace cva {

/// Mean unweighted loss components over one epoch.
struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double total = 0.0;
  double classification = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
  double video = 0.0;
  double max_grad_norm = 0.0;
  std::size_t clipped_steps = 0;
};

struct RunRecord {
  RunConfig config;
  std::string config_hash;
  std::vector<EpochStats> epochs;
  /// Weighted total loss of every optimizer step, in order.
  std::vector<double> step_losses;
  EvalReport report;
  double wall_clock_seconds = 0.0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

/// Observation points for tests and logging. All optional.
struct TrainHooks {
  /// After each forward pass, before the loss.
  std::function<void(std::size_t step, const ClipForward&)> on_forward;
  /// After backward and clipping, before the optimizer update.
  std::function<void(std::size_t step, const CvaNet&)> after_backward;
  /// Progress lines (one per epoch) are written here when set.
  std::ostream* log = nullptr;
};

struct TrainResult {
  RunRecord record;
  std::unique_ptr<CvaNet> model;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trains on the train split of `ds` and evaluates the final weights on the
/// test split. Batch size is one clip. Deterministic in `config.seed`.
TrainResult train(const RunConfig& config, const Dataset& ds, const TrainHooks& hooks = {});

/// Shuffle plan used for a video at inference time. Depends only on the id.
ShufflePlan inference_plan(const VideoSample& v);

/// Detections for every frame of every video, no gradient recording.
std::vector<FramePrediction> predict(const CvaNet& model, std::span<const VideoSample* const> videos);

/// Parameters plus the run configuration and frame size in the metadata.
Checkpoint make_checkpoint(const CvaNet& model, const RunConfig& config);
void save_model(const std::filesystem::path& path, const CvaNet& model, const RunConfig& config);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<CvaNet> model;
};
LoadedModel load_model(const Checkpoint& ckpt);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace cva
