#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cva/adam.hpp"
#include "cva/augment.hpp"
#include "cva/evaluation.hpp"
#include "cva/losses.hpp"
#include "cva/model.hpp"

namespace cva {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything needed to reproduce one training run.
///
/// JSON form (all keys optional, unknown keys rejected at every level):
///   {"name", "variant", "use_video_classifier", "augmentation", "sample_transforms",
///    "epochs", "learning_rate", "weight_decay", "warmup_steps", "grad_clip", "seed",
///    "max_steps", "dataset", "eval_mode",
///    "loss_weights": {"cls", "l1", "giou", "video", "no_object"},
///    "model": {"stem_channels", "stem_stride", "channels": [c1, c2, c3], "d_model",
///              "heads", "encoder_layers", "decoder_layers", "queries", "ffn_dim",
///              "similarity": "equation"|"text", "residual", "scale_similarity"}}
struct RunConfig {
  std::string name;
  Variant variant = Variant::full;
  bool use_video_classifier = true;
  /// Applied to the shuffled stream only.
  AugmentKind augmentation = AugmentKind::random_pepper;
  /// Random flip/resize/crop of the ordered clip and its boxes.
  bool sample_transforms = true;
  std::size_t epochs = 50;
  double learning_rate = 2e-4;
  double weight_decay = 1e-4;
  /// Linear warmup length in optimizer steps; 0 disables it.
  std::size_t warmup_steps = 0;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps; 0 means run every epoch in full.
  std::size_t max_steps = 0;
  std::string dataset;
  EvalMode eval_mode = EvalMode::class_agnostic;
  LossWeights loss_weights;
  /// Resolution fields are ignored; the dataset decides them.
  ModelConfig model;

  void validate() const;
  AdamOptions adam() const;
  /// Model configuration for frames of the given size.
  ModelConfig model_for(std::size_t height, std::size_t width) const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Short content hash of the canonical JSON form (16 hex digits, FNV-1a 64).
std::string config_hash(const RunConfig& c);

}  // namespace cva
