#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace cva {

/// Axis-aligned box in corner form (x1, y1, x2, y2). Units depend on context:
/// pixels for annotations, [0,1] for normalized predictions.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  bool operator==(const Box&) const = default;
};

/// Center/size form used by the detection head, normalized to [0,1].
struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

class BoxError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Box& b);

/// Throws BoxError unless 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height.
void validate_box(const Box& b, double width, double height);

Box to_corners(const CenterBox& b);
CenterBox to_center(const Box& b);

/// Scales a normalized box to pixel units.
Box to_pixels(const Box& normalized, double width, double height);
Box to_normalized(const Box& pixels, double width, double height);

/// Intersection over union. Throws BoxError on degenerate boxes.
double iou(const Box& a, const Box& b);

/// Generalized IoU: IoU - (|C| - |A u B|) / |C| where C is the smallest
/// enclosing box. Range (-1, 1].
double giou(const Box& a, const Box& b);

}  // namespace cva
