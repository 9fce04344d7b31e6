#include "cva/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cva/params.hpp"

namespace cva {

std::string to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::none: return "none";
    case AugmentKind::horizontal_flip: return "horizontal_flip";
    case AugmentKind::vertical_flip: return "vertical_flip";
    case AugmentKind::random_crop: return "random_crop";
    case AugmentKind::resize: return "resize";
    case AugmentKind::random_pepper: return "random_pepper";
    case AugmentKind::random_rotation: return "random_rotation";
    case AugmentKind::center_crop: return "center_crop";
  }
  return "none";
}

AugmentKind augment_kind_from_string(const std::string& s) {
  for (auto k : {AugmentKind::none, AugmentKind::horizontal_flip, AugmentKind::vertical_flip,
                 AugmentKind::random_crop, AugmentKind::resize, AugmentKind::random_pepper,
                 AugmentKind::random_rotation, AugmentKind::center_crop}) {
    if (to_string(k) == s) return k;
  }
  throw AugmentError("unknown augmentation kind '" + s + "'");
}

namespace {

// Output pixel center (ox, oy) -> source coordinates (sx, sy), both in pixel units.
struct Affine {
  double a = 1, b = 0, c = 0;  // sx = a*ox + b*oy + c
  double d = 0, e = 1, f = 0;  // sy = d*ox + e*oy + f

  Affine inverse() const {
    const double det = a * e - b * d;
    Affine inv;
    inv.a = e / det;
    inv.b = -b / det;
    inv.d = -d / det;
    inv.e = a / det;
    inv.c = -(inv.a * c + inv.b * f);
    inv.f = -(inv.d * c + inv.e * f);
    return inv;
  }
};

double sample_bilinear(const Image& img, double sx, double sy) {
  // Pixel centers sit at integer + 0.5; border pixels are replicated.
  const double fx = std::clamp(sx - 0.5, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(sy - 0.5, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(fx));
  const auto y0 = static_cast<std::size_t>(std::floor(fy));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double tx = fx - static_cast<double>(x0), ty = fy - static_cast<double>(y0);
  const double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
  const double bot = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
  return top * (1 - ty) + bot * ty;
}

Image warp(const Image& img, const Affine& out_to_src) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double ox = static_cast<double>(x) + 0.5, oy = static_cast<double>(y) + 0.5;
      out.at(y, x) = sample_bilinear(img, out_to_src.a * ox + out_to_src.b * oy + out_to_src.c,
                                     out_to_src.d * ox + out_to_src.e * oy + out_to_src.f);
    }
  }
  return out;
}

// Keeps a transformed box inside [0,W]x[0,H] with at least one pixel of extent.
Box clip_box(Box b, double W, double H) {
  b.x1 = std::clamp(b.x1, 0.0, W);
  b.x2 = std::clamp(b.x2, 0.0, W);
  b.y1 = std::clamp(b.y1, 0.0, H);
  b.y2 = std::clamp(b.y2, 0.0, H);
  if (b.x2 - b.x1 < 1.0) {
    const double c = std::clamp(0.5 * (b.x1 + b.x2), 0.5, W - 0.5);
    b.x1 = c - 0.5;
    b.x2 = c + 0.5;
  }
  if (b.y2 - b.y1 < 1.0) {
    const double c = std::clamp(0.5 * (b.y1 + b.y2), 0.5, H - 0.5);
    b.y1 = c - 0.5;
    b.y2 = c + 0.5;
  }
  return b;
}

Box map_box(const Box& b, const Affine& src_to_out, double W, double H) {
  const std::array<std::array<double, 2>, 4> corners{
      {{b.x1, b.y1}, {b.x2, b.y1}, {b.x1, b.y2}, {b.x2, b.y2}}};
  Box r{W, H, 0, 0};
  r.x1 = r.y1 = std::numeric_limits<double>::infinity();
  r.x2 = r.y2 = -std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : corners) {
    const double ox = src_to_out.a * x + src_to_out.b * y + src_to_out.c;
    const double oy = src_to_out.d * x + src_to_out.e * y + src_to_out.f;
    r.x1 = std::min(r.x1, ox);
    r.x2 = std::max(r.x2, ox);
    r.y1 = std::min(r.y1, oy);
    r.y2 = std::max(r.y2, oy);
  }
  return clip_box(r, W, H);
}

// Crop window [x0, x0+cw) x [y0, y0+ch) scaled back to the full frame.
Affine crop_affine(double x0, double y0, double cw, double ch, double W, double H) {
  Affine t;
  t.a = cw / W;
  t.c = x0;
  t.e = ch / H;
  t.f = y0;
  return t;
}

// Union of all boxes, or an empty sentinel if there are none.
bool boxes_extent(std::span<const Box> boxes, Box& out) {
  if (boxes.empty()) return false;
  out = boxes.front();
  for (const auto& b : boxes) {
    out.x1 = std::min(out.x1, b.x1);
    out.y1 = std::min(out.y1, b.y1);
    out.x2 = std::max(out.x2, b.x2);
    out.y2 = std::max(out.y2, b.y2);
  }
  return true;
}

}  // namespace

AugmentResult augment(std::span<const Image> frames, std::span<const Box> boxes,
                      std::uint64_t seed, AugmentKind kind, const AugmentOptions& opt) {
  if (frames.empty()) throw AugmentError("augment: no frames");
  const std::size_t h = frames.front().height, w = frames.front().width;
  for (const auto& f : frames) {
    if (f.height != h || f.width != w) throw AugmentError("augment: frames differ in resolution");
  }
  const double W = static_cast<double>(w), H = static_cast<double>(h);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  AugmentResult out;
  out.boxes.assign(boxes.begin(), boxes.end());

  auto apply_affine = [&](const Affine& out_to_src) {
    const Affine src_to_out = out_to_src.inverse();
    for (const auto& f : frames) out.frames.push_back(warp(f, out_to_src));
    for (auto& b : out.boxes) b = map_box(b, src_to_out, W, H);
  };

  switch (kind) {
    case AugmentKind::none:
      out.frames.assign(frames.begin(), frames.end());
      break;

    case AugmentKind::horizontal_flip:
      for (const auto& f : frames) {
        Image o(h, w);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) o.at(y, x) = f.at(y, w - 1 - x);
        out.frames.push_back(std::move(o));
      }
      for (auto& b : out.boxes) b = Box{W - b.x2, b.y1, W - b.x1, b.y2};
      break;

    case AugmentKind::vertical_flip:
      for (const auto& f : frames) {
        Image o(h, w);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) o.at(y, x) = f.at(h - 1 - y, x);
        out.frames.push_back(std::move(o));
      }
      for (auto& b : out.boxes) b = Box{b.x1, H - b.y2, b.x2, H - b.y1};
      break;

    case AugmentKind::random_pepper: {
      if (opt.pepper_fraction < 0.0 || opt.pepper_fraction > 1.0) {
        throw AugmentError("augment: pepper fraction must lie in [0, 1]");
      }
      // One noise pattern shared by all frames.
      std::vector<int> pattern(h * w, -1);
      for (auto& p : pattern) {
        const double u = unif(rng);
        const double salt = unif(rng);
        if (u < opt.pepper_fraction) p = salt < 0.5 ? 0 : 1;
      }
      for (const auto& f : frames) {
        Image o = f;
        for (std::size_t i = 0; i < pattern.size(); ++i)
          if (pattern[i] >= 0) o.pixels[i] = pattern[i];
        out.frames.push_back(std::move(o));
      }
      break;
    }

    case AugmentKind::random_crop: {
      double cw, ch;
      if (opt.crop_width || opt.crop_height) {
        if (opt.crop_width > w || opt.crop_height > h || !opt.crop_width || !opt.crop_height) {
          throw AugmentError("augment: crop " + std::to_string(opt.crop_height) + "x" +
                             std::to_string(opt.crop_width) + " does not fit frame " +
                             std::to_string(h) + "x" + std::to_string(w));
        }
        cw = static_cast<double>(opt.crop_width);
        ch = static_cast<double>(opt.crop_height);
      } else {
        if (opt.crop_min_fraction <= 0.0 || opt.crop_min_fraction > 1.0) {
          throw AugmentError("augment: crop fraction must lie in (0, 1]");
        }
        const double s = opt.crop_min_fraction + (1.0 - opt.crop_min_fraction) * unif(rng);
        cw = std::round(s * W);
        ch = std::round(s * H);
      }
      // Keep the annotated region inside the window when it fits.
      double xlo = 0.0, xhi = W - cw, ylo = 0.0, yhi = H - ch;
      Box ext;
      if (boxes_extent(boxes, ext)) {
        if (ext.width() <= cw) {
          xlo = std::max(xlo, ext.x2 - cw);
          xhi = std::min(xhi, ext.x1);
        }
        if (ext.height() <= ch) {
          ylo = std::max(ylo, ext.y2 - ch);
          yhi = std::min(yhi, ext.y1);
        }
      }
      const double x0 = std::floor(xlo + (xhi - xlo) * unif(rng));
      const double y0 = std::floor(ylo + (yhi - ylo) * unif(rng));
      apply_affine(crop_affine(std::clamp(x0, 0.0, W - cw), std::clamp(y0, 0.0, H - ch), cw, ch, W, H));
      break;
    }

    case AugmentKind::center_crop: {
      const double f = opt.center_crop_fraction;
      if (f <= 0.0 || f > 1.0) throw AugmentError("augment: center crop fraction must lie in (0, 1]");
      const double cw = std::round(f * W), ch = std::round(f * H);
      apply_affine(crop_affine(std::floor(0.5 * (W - cw)), std::floor(0.5 * (H - ch)), cw, ch, W, H));
      break;
    }

    case AugmentKind::resize: {
      if (opt.resize_min <= 0.0 || opt.resize_max < opt.resize_min) {
        throw AugmentError("augment: invalid resize range");
      }
      const double z = opt.resize_min + (opt.resize_max - opt.resize_min) * unif(rng);
      // Zoom by z about the frame center.
      Affine t;
      t.a = 1.0 / z;
      t.e = 1.0 / z;
      t.c = 0.5 * W * (1.0 - 1.0 / z);
      t.f = 0.5 * H * (1.0 - 1.0 / z);
      apply_affine(t);
      break;
    }

    case AugmentKind::random_rotation: {
      const double deg = opt.max_rotation_degrees * (2.0 * unif(rng) - 1.0);
      const double th = deg * std::numbers::pi / 180.0;
      const double c = std::cos(th), s = std::sin(th);
      const double cx = 0.5 * W, cy = 0.5 * H;
      // Output -> source: rotate by -th about the center.
      Affine t;
      t.a = c;
      t.b = s;
      t.d = -s;
      t.e = c;
      t.c = cx - c * cx - s * cy;
      t.f = cy + s * cx - c * cy;
      apply_affine(t);
      break;
    }
  }
  return out;
}

}  // namespace cva
