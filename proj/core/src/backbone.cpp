#include "cva/backbone.hpp"

#include <cmath>

#include "cva/ops.hpp"

namespace cva {

bool FeaturePyramid::equals(const FeaturePyramid& other) const {
  for (std::size_t i = 0; i < kPyramidLevels; ++i)
    if (!levels[i].equals(other.levels[i])) return false;
  return true;
}

Tensor image_to_tensor(const Image& frame) {
  std::vector<double> data(frame.pixels.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = (frame.pixels[i] - 0.5) * 4.0;
  return Tensor({1, frame.height, frame.width}, std::move(data));
}

Backbone::Backbone(const BackboneConfig& config, Rng& rng, ParameterSet& params,
                   const std::string& prefix)
    : config_(config) {
  if (config.height < 32 || config.width < 32 || config.d_model == 0 || config.stem_channels == 0 ||
      config.stem_stride == 0) {
    throw std::invalid_argument("backbone: invalid configuration");
  }
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
    const double fan_in = static_cast<double>(cin * k * k);
    Conv c;
    c.weight = params.add(prefix + name + ".weight",
                          normal_tensor({cout, cin, k, k}, std::sqrt(2.0 / fan_in), rng));
    c.bias = params.add(prefix + name + ".bias", Tensor({cout}));
    return c;
  };
  stem_ = conv("stem", config.stem_channels, 1, 3);
  std::size_t cin = config.stem_channels;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const std::size_t c = config.channels[i];
    const std::string s = "stage" + std::to_string(i + 1);
    stage_a_[i] = conv(s + ".conv1", c, cin, 3);
    stage_b_[i] = conv(s + ".conv2", c, c, 3);
    cin = c;
  }
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const std::size_t c = config.channels[i];
    Conv p;
    p.weight = params.add(prefix + "proj" + std::to_string(i + 1) + ".weight",
                          normal_tensor({config.d_model, c}, std::sqrt(1.0 / static_cast<double>(c)), rng));
    p.bias = params.add(prefix + "proj" + std::to_string(i + 1) + ".bias", Tensor({config.d_model}));
    project_[i] = p;
  }
}

std::array<std::array<std::size_t, 2>, kPyramidLevels> Backbone::level_sizes() const {
  // 3x3 kernel, padding 1
  auto down = [](std::size_t v, std::size_t s) { return (v - 1) / s + 1; };
  auto half = [&](std::size_t v) { return down(v, 2); };
  std::size_t h = down(config_.height, config_.stem_stride);
  std::size_t w = down(config_.width, config_.stem_stride);
  std::array<std::array<std::size_t, 2>, kPyramidLevels> out{};
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    h = half(h);
    w = half(w);
    out[i] = {h, w};
  }
  return out;
}

FeaturePyramid Backbone::stage_features(const Tensor& frame) const {
  if (frame.rank() != 3 || frame.dim(0) != 1 || frame.dim(1) != config_.height ||
      frame.dim(2) != config_.width) {
    throw DimensionError("backbone: expected input [1x" + std::to_string(config_.height) + "x" +
                         std::to_string(config_.width) + "], got " + shape_str(frame.shape()));
  }
  auto block = [](const Tensor& x, const Conv& c, std::size_t stride) {
    return relu(instance_norm(conv2d(x, c.weight, c.bias, {stride, 1})));
  };
  Tensor x = block(frame, stem_, config_.stem_stride);
  FeaturePyramid out;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    x = block(x, stage_a_[i], 1);
    x = block(x, stage_b_[i], 2);
    out[i] = x;
  }
  return out;
}

FeaturePyramid Backbone::extract(const Tensor& frame) const {
  FeaturePyramid raw = stage_features(frame);
  FeaturePyramid out;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    out[i] = channel_map(raw[i], project_[i].weight, project_[i].bias);
  }
  return out;
}

FeaturePyramid Backbone::extract(const Image& frame) const {
  if (frame.height != config_.height || frame.width != config_.width) {
    throw DimensionError("backbone: frame resolution " + std::to_string(frame.height) + "x" +
                         std::to_string(frame.width) + " differs from configured " +
                         std::to_string(config_.height) + "x" + std::to_string(config_.width));
  }
  return extract(image_to_tensor(frame));
}

}  // namespace cva
