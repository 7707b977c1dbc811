#pragma once

#include <algorithm>
#include <vector>

namespace sodgelan {

// Normalized center-size box, all coordinates in [0, 1] image units.
struct BoundingBox {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }

  static BoundingBox from_corners(double x1, double y1, double x2, double y2, int cls = 0) {
    return {cls, (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }
};

struct Detection {
  BoundingBox box;
  double score = 0;
  int class_id = 0;
};

inline double intersection(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

// Intersection over union; 0 for disjoint or degenerate pairs.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? std::min(1.0, inter / uni) : 0.0;  // corner rounding can overshoot 1
}

}  // namespace sodgelan
