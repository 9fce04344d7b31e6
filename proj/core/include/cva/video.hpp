#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cva/box.hpp"
#include "cva/params.hpp"

namespace cva {

/// Grayscale frame, row-major, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  bool operator==(const Image&) const = default;
};

enum class LesionClass { benign = 0, malignant = 1 };
enum class Split { train, test };

std::string to_string(LesionClass c);
LesionClass lesion_class_from_string(const std::string& s);
std::string to_string(Split s);
Split split_from_string(const std::string& s);

class InvalidVideoError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VideoSample {
  std::string id;
  std::vector<Image> frames;
  std::vector<std::vector<Box>> boxes;  // per frame, pixel corners
  LesionClass label = LesionClass::benign;
  Split split = Split::train;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }

  bool operator==(const VideoSample&) const = default;
};

/// Checks T >= 3, a shared resolution, one box list per frame and box bounds.
void validate(const VideoSample& v);

struct GeneratorConfig {
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t frames = 24;
  LesionClass label = LesionClass::benign;
  /// Lesion size range as a fraction of min(height, width).
  double min_radius = 0.07;
  double max_radius = 0.2;
  /// Relative amplitude of the star perturbation of malignant boundaries.
  double irregularity = 0.3;
};

/// Lesion pixel mask per frame, kept alongside the rendered video so the
/// geometry can be measured independently of the speckle.
struct GeneratedVideo {
  VideoSample sample;
  std::vector<std::vector<std::uint8_t>> masks;
};

/// A lesion moving over multiplicative speckle. The lesion grows to its largest
/// section mid-video and shrinks again. Benign lesions are smooth ellipses;
/// malignant ones have a star-perturbed boundary and lower contrast. Frames are
/// quantized to 8-bit levels so they survive PGM storage exactly.
GeneratedVideo generate_video_with_masks(std::uint64_t seed, const GeneratorConfig& config);
VideoSample generate_video(std::uint64_t seed, const GeneratorConfig& config);

/// perimeter^2 / area of a binary mask, perimeter counted as exposed pixel edges.
double boundary_irregularity(const std::vector<std::uint8_t>& mask, std::size_t height,
                             std::size_t width);

/// Frame order permutation of the shuffled stream: shuffled[j] = frames[order[j]].
struct ShufflePlan {
  std::vector<std::size_t> order;
  std::uint64_t seed = 0;

  static ShufflePlan random(std::size_t frame_count, std::uint64_t seed);
  static ShufflePlan identity(std::size_t frame_count);

  bool is_bijection() const;
  ShufflePlan inverse() const;
  std::size_t operator()(std::size_t position) const { return order.at(position); }
};

struct Clip {
  std::size_t center = 0;
  std::array<std::size_t, 3> ordered_indices{};   // k-1, k, k+1 after clamping
  std::array<std::size_t, 3> shuffled_indices{};  // order[] at the same positions
  std::array<Image, 3> frames;
  std::array<Image, 3> shuffled;
  std::vector<Box> boxes;  // ground truth of frame k
  LesionClass label = LesionClass::benign;
};

/// Neighborhood (k-1, k, k+1) clamped to [0, T-1] from the ordered video and
/// from the shuffled video.
Clip sample_clip(const VideoSample& video, std::size_t k, const ShufflePlan& plan);

}  // namespace cva
