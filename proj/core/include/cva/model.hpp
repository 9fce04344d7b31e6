#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "cva/backbone.hpp"
#include "cva/fusion.hpp"
#include "cva/head.hpp"
#include "cva/params.hpp"
#include "cva/video.hpp"

namespace cva {

/// Which fusion stages are active. Disabled stages are exact pass-throughs.
enum class Variant { basic, basic_inter, basic_intra, full };

std::string to_string(Variant v);
/// Accepts "basic", "basic+inter", "basic+intra", "full".
Variant variant_from_string(const std::string& s);
bool uses_inter(Variant v);
bool uses_intra(Variant v);

struct ModelConfig {
  BackboneConfig backbone;
  HeadConfig head;
  FusionOptions fusion;
  Variant variant = Variant::full;
  bool use_video_classifier = true;

  /// Throws std::invalid_argument on inconsistent widths.
  void validate() const;
};

/// Every intermediate of one clip forward pass. Index 0/1/2 = frames k-1, k, k+1.
struct ClipForward {
  std::array<FeaturePyramid, 3> local;   // L
  std::array<FeaturePyramid, 3> global;  // G; unset when inter fusion is off
  std::array<FeaturePyramid, 3> inter;   // P
  FeaturePyramid intra;                  // Q_k
  DetectionSet detections;
  LongRangeFeature z;
  std::optional<VideoPrediction> video;
};

/// Backbone shared by both streams, inter fusion per frame, intra fusion over
/// the clip, detection head on Q_k and the video classifier on Z.
///
/// All parameters are created for every variant in the same order so that
/// variants with the same seed start from identical shared weights.
class CvaNet {
 public:
  CvaNet(const ModelConfig& config, std::uint64_t seed);

  ClipForward forward(std::span<const Image, 3> ordered, std::span<const Image, 3> shuffled) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const DetectionHead& head() const { return head_; }
  const VideoClassifier& video_classifier() const { return video_cls_; }
  /// Names of the parameters owned by the video classifier.
  std::vector<std::string> video_classifier_parameters() const;

 private:
  ModelConfig config_;
  Rng rng_;
  ParameterSet params_;
  Backbone backbone_;
  InterFusionWeights inter_;
  IntraFusionWeights intra_;
  DetectionHead head_;
  VideoClassifier video_cls_;
};

}  // namespace cva
