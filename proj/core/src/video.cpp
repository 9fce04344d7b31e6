#include "cva/video.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace cva {

std::string to_string(LesionClass c) { return c == LesionClass::benign ? "benign" : "malignant"; }

LesionClass lesion_class_from_string(const std::string& s) {
  if (s == "benign") return LesionClass::benign;
  if (s == "malignant") return LesionClass::malignant;
  throw InvalidVideoError("unknown lesion label '" + s + "' (expected benign|malignant)");
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw InvalidVideoError("unknown split '" + s + "' (expected train|test)");
}

void validate(const VideoSample& v) {
  if (v.frames.size() < 3) {
    throw InvalidVideoError("video '" + v.id + "' has " + std::to_string(v.frames.size()) +
                            " frames; at least 3 are required");
  }
  if (v.boxes.size() != v.frames.size()) {
    throw InvalidVideoError("video '" + v.id + "' has " + std::to_string(v.boxes.size()) +
                            " box lists for " + std::to_string(v.frames.size()) + " frames");
  }
  const std::size_t h = v.frames.front().height, w = v.frames.front().width;
  for (std::size_t k = 0; k < v.frames.size(); ++k) {
    const auto& f = v.frames[k];
    if (f.height != h || f.width != w || f.pixels.size() != h * w) {
      throw InvalidVideoError("video '" + v.id + "' frame " + std::to_string(k) +
                              " does not share the video resolution");
    }
    for (const auto& b : v.boxes[k]) {
      try {
        validate_box(b, static_cast<double>(w), static_cast<double>(h));
      } catch (const BoxError& e) {
        throw BoxError("video '" + v.id + "' frame " + std::to_string(k) + ": " + e.what());
      }
    }
  }
}

namespace {

constexpr double kPi = std::numbers::pi;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct LesionShape {
  double cx, cy;      // pixels
  double rx, ry;      // semi-axes, pixels
  double angle;       // radians
  bool irregular;
  double amplitude;
  int lobes;
  double phase1, phase2;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double q = std::sqrt(u * u + v * v);
    double rho = 1.0;
    if (irregular) {
      const double phi = std::atan2(v, u);
      rho += amplitude * (0.7 * std::sin(lobes * phi + phase1) +
                          0.3 * std::sin((lobes + 3) * phi + phase2));
    }
    return q <= rho;
  }
};

}  // namespace

GeneratedVideo generate_video_with_masks(std::uint64_t seed, const GeneratorConfig& cfg) {
  if (cfg.frames < 3) {
    throw InvalidVideoError("generate_video: T=" + std::to_string(cfg.frames) + " but T >= 3 is required");
  }
  if (cfg.height < 32 || cfg.width < 32) {
    throw InvalidVideoError("generate_video: resolution " + std::to_string(cfg.height) + "x" +
                            std::to_string(cfg.width) + " below the 32x32 minimum");
  }
  if (!(cfg.min_radius > 0.0 && cfg.min_radius < cfg.max_radius && cfg.max_radius < 0.35) ||
      cfg.irregularity < 0.0 || cfg.irregularity > 0.5) {
    throw InvalidVideoError("generate_video: invalid lesion size or irregularity settings");
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double H = static_cast<double>(cfg.height), W = static_cast<double>(cfg.width);
  const double side = std::min(H, W);
  const double rmin = cfg.min_radius * side, rmax = cfg.max_radius * side;
  const bool malignant = cfg.label == LesionClass::malignant;

  // Every draw happens regardless of label so that both classes share geometry
  // for a given seed.
  const double aspect = 0.7 + 0.3 * unif(rng);
  const double angle0 = kPi * unif(rng);
  const double spin = 0.02 * (unif(rng) - 0.5);
  const int lobes = 5 + static_cast<int>(unif(rng) * 3.0);
  const double phase1 = 2.0 * kPi * unif(rng), phase2 = 2.0 * kPi * unif(rng);
  const double margin = rmax * (1.0 + cfg.irregularity) + 2.0;
  const double cx0 = margin + (W - 2.0 * margin) * (0.3 + 0.4 * unif(rng));
  const double cy0 = margin + (H - 2.0 * margin) * (0.3 + 0.4 * unif(rng));
  const double drift_x = 0.15 * W * (unif(rng) - 0.5);
  const double drift_y = 0.15 * H * (unif(rng) - 0.5);
  const double wobble_phase = 2.0 * kPi * unif(rng);
  const double bg_fx = 1.0 + 2.0 * unif(rng), bg_fy = 1.0 + 2.0 * unif(rng);
  const double bg_px = 2.0 * kPi * unif(rng), bg_py = 2.0 * kPi * unif(rng);
  const double band_phase = 2.0 * kPi * unif(rng);
  const double lesion_level = malignant ? 0.34 : 0.22;

  std::gamma_distribution<double> speckle(4.0, 0.25);  // unit mean

  GeneratedVideo out;
  auto& v = out.sample;
  v.id = "video";
  v.label = cfg.label;
  const std::size_t T = cfg.frames;
  for (std::size_t t = 0; t < T; ++t) {
    const double phase = (static_cast<double>(t) + 0.5) / static_cast<double>(T);
    const double r = rmin + (rmax - rmin) * std::sin(kPi * phase);
    LesionShape shape{};
    shape.cx = std::clamp(cx0 + drift_x * (phase - 0.5) + std::sin(2.0 * kPi * phase + wobble_phase),
                          margin, W - margin);
    shape.cy = std::clamp(cy0 + drift_y * (phase - 0.5) + std::cos(2.0 * kPi * phase + wobble_phase),
                          margin, H - margin);
    shape.rx = r;
    shape.ry = r * aspect;
    shape.angle = angle0 + spin * static_cast<double>(t);
    shape.irregular = malignant;
    shape.amplitude = cfg.irregularity;
    shape.lobes = lobes;
    shape.phase1 = phase1;
    shape.phase2 = phase2;

    std::vector<std::uint8_t> mask(cfg.height * cfg.width, 0);
    Image raw(cfg.height, cfg.width);
    std::size_t x1 = cfg.width, y1 = cfg.height, x2 = 0, y2 = 0;
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const bool inside = shape.contains(px, py);
        double base = 0.55 + 0.08 * std::sin(2.0 * kPi * bg_fx * px / W + bg_px) *
                                 std::cos(2.0 * kPi * bg_fy * py / H + bg_py) +
                      0.05 * std::sin(6.0 * kPi * py / H + band_phase) + 0.05 * (py / H - 0.5);
        if (inside) {
          base = lesion_level;
          mask[y * cfg.width + x] = 1;
          x1 = std::min(x1, x);
          y1 = std::min(y1, y);
          x2 = std::max(x2, x + 1);
          y2 = std::max(y2, y + 1);
        }
        raw.at(y, x) = base * speckle(rng);
      }
    }
    if (x2 == 0) {  // lesion smaller than a pixel: mark the center pixel
      const auto cx = static_cast<std::size_t>(shape.cx), cy = static_cast<std::size_t>(shape.cy);
      mask[cy * cfg.width + cx] = 1;
      x1 = cx, y1 = cy, x2 = cx + 1, y2 = cy + 1;
    }
    // Light [1 2 1] smoothing gives the speckle some spatial correlation.
    Image frame(cfg.height, cfg.width);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        double acc = 0.0, wsum = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(cfg.height) ||
                xx >= static_cast<std::ptrdiff_t>(cfg.width))
              continue;
            const double wgt = (dy == 0 ? 2.0 : 1.0) * (dx == 0 ? 2.0 : 1.0);
            acc += wgt * raw.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            wsum += wgt;
          }
        }
        frame.at(y, x) = quantize(acc / wsum);
      }
    }
    v.frames.push_back(std::move(frame));
    v.boxes.push_back({Box{static_cast<double>(x1), static_cast<double>(y1),
                           static_cast<double>(x2), static_cast<double>(y2)}});
    out.masks.push_back(std::move(mask));
  }
  return out;
}

VideoSample generate_video(std::uint64_t seed, const GeneratorConfig& config) {
  return generate_video_with_masks(seed, config).sample;
}

double boundary_irregularity(const std::vector<std::uint8_t>& mask, std::size_t height,
                             std::size_t width) {
  std::size_t area = 0, perimeter = 0;
  auto in = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(height) ||
        x >= static_cast<std::ptrdiff_t>(width))
      return false;
    return mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] != 0;
  };
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!mask[y * width + x]) continue;
      ++area;
      const auto yy = static_cast<std::ptrdiff_t>(y), xx = static_cast<std::ptrdiff_t>(x);
      perimeter += !in(yy - 1, xx) + !in(yy + 1, xx) + !in(yy, xx - 1) + !in(yy, xx + 1);
    }
  }
  if (area == 0) return 0.0;
  return static_cast<double>(perimeter * perimeter) / static_cast<double>(area);
}

ShufflePlan ShufflePlan::random(std::size_t frame_count, std::uint64_t seed) {
  ShufflePlan p = identity(frame_count);
  p.seed = seed;
  Rng rng(seed);
  std::shuffle(p.order.begin(), p.order.end(), rng);
  return p;
}

ShufflePlan ShufflePlan::identity(std::size_t frame_count) {
  ShufflePlan p;
  p.order.resize(frame_count);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  return p;
}

bool ShufflePlan::is_bijection() const {
  std::vector<bool> seen(order.size(), false);
  for (auto i : order) {
    if (i >= order.size() || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

ShufflePlan ShufflePlan::inverse() const {
  if (!is_bijection()) throw std::invalid_argument("shuffle plan is not a permutation");
  ShufflePlan inv;
  inv.seed = seed;
  inv.order.resize(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) inv.order[order[j]] = j;
  return inv;
}

Clip sample_clip(const VideoSample& video, std::size_t k, const ShufflePlan& plan) {
  const std::size_t T = video.frame_count();
  if (k >= T) {
    throw std::out_of_range("sample_clip: k=" + std::to_string(k) + " outside [0, " +
                            std::to_string(T) + ")");
  }
  if (plan.order.size() != T || !plan.is_bijection()) {
    throw std::invalid_argument("sample_clip: shuffle plan is not a permutation of the " +
                                std::to_string(T) + " frames");
  }
  Clip clip;
  clip.center = k;
  clip.label = video.label;
  const std::array<std::size_t, 3> positions{k == 0 ? 0 : k - 1, k, std::min(k + 1, T - 1)};
  for (std::size_t i = 0; i < 3; ++i) {
    clip.ordered_indices[i] = positions[i];
    clip.shuffled_indices[i] = plan(positions[i]);
    clip.frames[i] = video.frames[positions[i]];
    clip.shuffled[i] = video.frames[clip.shuffled_indices[i]];
  }
  clip.boxes = video.boxes[k];
  return clip;
}

}  // namespace cva
