#include "cva/box.hpp"

#include <algorithm>
#include <sstream>

namespace cva {

std::string to_string(const Box& b) {
  std::ostringstream os;
  os << '(' << b.x1 << ',' << b.y1 << ',' << b.x2 << ',' << b.y2 << ')';
  return os.str();
}

void validate_box(const Box& b, double width, double height) {
  if (!(0.0 <= b.x1 && b.x1 < b.x2 && b.x2 <= width && 0.0 <= b.y1 && b.y1 < b.y2 &&
        b.y2 <= height)) {
    throw BoxError("box " + to_string(b) + " violates 0 <= x1 < x2 <= " + std::to_string(width) +
                   ", 0 <= y1 < y2 <= " + std::to_string(height));
  }
}

Box to_corners(const CenterBox& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

CenterBox to_center(const Box& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.width(), b.height()};
}

Box to_pixels(const Box& n, double width, double height) {
  return {n.x1 * width, n.y1 * height, n.x2 * width, n.y2 * height};
}

Box to_normalized(const Box& p, double width, double height) {
  return {p.x1 / width, p.y1 / height, p.x2 / width, p.y2 / height};
}

namespace {

void require_valid(const Box& b) {
  if (!b.valid()) throw BoxError("degenerate box " + to_string(b));
}

double intersection(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection(a, b);
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclosing = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                           (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  // Nested boxes have enclosing == union; rounding can make the difference negative.
  return inter / uni - std::max(0.0, enclosing - uni) / enclosing;
}

}  // namespace cva
