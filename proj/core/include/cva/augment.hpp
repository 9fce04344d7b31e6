#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cva/box.hpp"
#include "cva/video.hpp"

namespace cva {

enum class AugmentKind {
  none,
  horizontal_flip,
  vertical_flip,
  random_crop,
  resize,
  random_pepper,
  random_rotation,
  center_crop,
};

std::string to_string(AugmentKind k);
AugmentKind augment_kind_from_string(const std::string& s);

struct AugmentOptions {
  double pepper_fraction = 0.02;
  /// random_crop draws a window whose side is this fraction range of the frame.
  double crop_min_fraction = 0.75;
  /// Explicit crop window in pixels; 0 means "use the fraction range".
  std::size_t crop_height = 0;
  std::size_t crop_width = 0;
  double center_crop_fraction = 0.8;
  double resize_min = 0.85;
  double resize_max = 1.15;
  double max_rotation_degrees = 15.0;
};

class AugmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AugmentResult {
  std::vector<Image> frames;
  std::vector<Box> boxes;
};

/// Applies one transform, drawn once from `seed`, identically to every frame.
/// Boxes (pixel corners, in the frames' coordinate system) follow geometric
/// transforms and stay inside the frame with positive extent. Output frames
/// keep the input resolution.
AugmentResult augment(std::span<const Image> frames, std::span<const Box> boxes,
                      std::uint64_t seed, AugmentKind kind, const AugmentOptions& options = {});

}  // namespace cva
