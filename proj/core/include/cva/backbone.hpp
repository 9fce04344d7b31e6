#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "cva/params.hpp"
#include "cva/tensor.hpp"
#include "cva/video.hpp"

namespace cva {

inline constexpr std::size_t kPyramidLevels = 3;

/// Three feature maps of decreasing resolution, level i of shape c x h_i x w_i.
struct FeaturePyramid {
  std::array<Tensor, kPyramidLevels> levels;

  const Tensor& operator[](std::size_t i) const { return levels[i]; }
  Tensor& operator[](std::size_t i) { return levels[i]; }
  bool equals(const FeaturePyramid& other) const;
};

struct BackboneConfig {
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t stem_channels = 16;
  /// Stride of the stem convolution; 4 quarters the token count of every level.
  std::size_t stem_stride = 2;
  std::array<std::size_t, kPyramidLevels> channels{32, 64, 128};
  /// Common width all levels are projected to before fusion.
  std::size_t d_model = 64;
};

/// Small convolutional stand-in for a ResNet trunk:
///   stem conv3x3/s -> 3 x [conv3x3, norm, relu, conv3x3/2, norm, relu]
/// followed by per-level 1x1 projections to d_model. Normalization is
/// parameter-free instance norm.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng, ParameterSet& params,
           const std::string& prefix = "backbone.");

  /// Frame must match the configured resolution.
  FeaturePyramid extract(const Image& frame) const;
  FeaturePyramid extract(const Tensor& frame) const;

  /// Spatial size (h, w) of each level for the configured resolution.
  std::array<std::array<std::size_t, 2>, kPyramidLevels> level_sizes() const;
  const BackboneConfig& config() const { return config_; }

  /// Raw stage outputs before projection.
  FeaturePyramid stage_features(const Tensor& frame) const;

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
  };
  BackboneConfig config_;
  Conv stem_;
  std::array<Conv, kPyramidLevels> stage_a_;
  std::array<Conv, kPyramidLevels> stage_b_;
  std::array<Conv, kPyramidLevels> project_;  // weight [d x c_i]
};

/// [1 x h x w] input tensor, centered and scaled.
Tensor image_to_tensor(const Image& frame);

}  // namespace cva
