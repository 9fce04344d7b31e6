#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cva/video.hpp"

namespace cva {

/// On disk:
///   <dir>/manifest.json
///   <dir>/<video_id>/frame_<kkkk>.pgm   (8-bit binary PGM, k zero-padded to 4)
///
/// manifest: {"videos": [{"id", "label": "benign"|"malignant", "frame_count",
///            "resolution": [h, w], "boxes": [[x1,y1,x2,y2], ...] per frame,
///            "split": "train"|"test"}]}
struct Dataset {
  std::vector<VideoSample> videos;

  std::vector<const VideoSample*> split(Split s) const;
  const VideoSample& find(const std::string& id) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::size_t videos = 50;
  std::size_t frames = 24;
  std::size_t height = 96;
  std::size_t width = 96;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Balanced benign/malignant videos with a label-stratified train/test split.
Dataset generate_dataset(const DatasetConfig& config);

/// Marks round(test_fraction * N) videos as test, alternating labels so the
/// split stays balanced. Deterministic in `seed`.
void assign_split(Dataset& ds, double test_fraction, std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string frame_filename(std::size_t k);

void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// RGB overlay output for visual inspection.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;
};
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

}  // namespace cva
