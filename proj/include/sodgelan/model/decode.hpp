#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sodgelan/core/box.hpp"
#include "sodgelan/core/tensor.hpp"
#include "sodgelan/model/detect.hpp"

namespace sodgelan::model {

// Per-cell box parameterization. The center may move from -0.5 to 1.5 cells from the cell's
// top-left corner, so a target can be regressed from its own cell and the two nearest neighbors.
// Size is anchor-free: stride * exp(t).
inline constexpr double kMinCellOffset = -0.5, kMaxCellOffset = 1.5;
inline constexpr double kMinLogSize = -12.0, kMaxLogSize = 8.0;

struct BoxCode {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Raw regressors at cell (gx, gy) -> normalized box.
inline BoundingBox decode_box(const BoxCode& t, int gx, int gy, int stride, int image_size) {
  const double s = stride, img = image_size;
  const double cx = (gx + 2.0 * sigmoid(t.tx) - 0.5) * s;
  const double cy = (gy + 2.0 * sigmoid(t.ty) - 0.5) * s;
  const double w = s * std::exp(std::clamp(t.tw, kMinLogSize, kMaxLogSize));
  const double h = s * std::exp(std::clamp(t.th, kMinLogSize, kMaxLogSize));
  return {0, cx / img, cy / img, w / img, h / img};
}

// True when the cell can represent the box center.
inline bool cell_covers(const BoundingBox& b, int gx, int gy, int stride, int image_size) {
  const double ox = b.cx * image_size / stride - gx, oy = b.cy * image_size / stride - gy;
  return ox > kMinCellOffset && ox < kMaxCellOffset && oy > kMinCellOffset && oy < kMaxCellOffset;
}

// Inverse of decode_box.
inline BoxCode encode_box(const BoundingBox& b, int gx, int gy, int stride, int image_size) {
  SODGELAN_REQUIRE(b.w > 0 && b.h > 0, InvalidInput, "cannot encode a degenerate box");
  SODGELAN_REQUIRE(cell_covers(b, gx, gy, stride, image_size), InvalidInput, "cell (", gx, ",", gy,
                   ") cannot reach box center");
  const double s = stride, img = image_size;
  const double ox = b.cx * img / s - gx, oy = b.cy * img / s - gy;
  return {logit((ox + 0.5) / 2.0), logit((oy + 0.5) / 2.0), std::log(b.w * img / s), std::log(b.h * img / s)};
}

// Per-class greedy suppression; returns survivors sorted by score (descending), at most max_det.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int max_det) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> keep;
  for (const auto& d : dets) {
    if (static_cast<int>(keep.size()) >= max_det) break;
    bool suppressed = false;
    for (const auto& k : keep)
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) keep.push_back(d);
  }
  return keep;
}

struct DecodeOptions {
  double conf_threshold = 0.001;
  double iou_threshold = 0.7;
  int max_det = 300;
  int max_candidates = 30000;  // pre-suppression cap by score
};

// Raw per-level head outputs -> per-image detections in normalized coordinates.
template <class T>
std::vector<std::vector<Detection>> decode_and_nms(const std::vector<Tensor<T>>& raw, const std::vector<int>& strides,
                                                   int image_size, const DecodeOptions& opt = {}) {
  SODGELAN_REQUIRE(raw.size() == strides.size() && !raw.empty(), ShapeMismatch, "decode: ", raw.size(),
                   " levels vs ", strides.size(), " strides");
  SODGELAN_REQUIRE(opt.conf_threshold >= 0 && opt.conf_threshold <= 1 && opt.iou_threshold >= 0 &&
                       opt.iou_threshold <= 1,
                   InvalidInput, "decode thresholds must lie in [0, 1]");
  const int n = raw[0].dim(0), nc = raw[0].dim(1) - kBoxOutputs;
  SODGELAN_REQUIRE(nc >= 1, ShapeMismatch, "decode: head output has no class channels");
  std::vector<std::vector<Detection>> out(n);
  for (int b = 0; b < n; ++b) {
    std::vector<Detection> cand;
    for (std::size_t l = 0; l < raw.size(); ++l) {
      const auto& r = raw[l];
      for (int gy = 0; gy < r.dim(2); ++gy)
        for (int gx = 0; gx < r.dim(3); ++gx)
          for (int c = 0; c < nc; ++c) {
            const double score = sigmoid(r.at(b, kBoxOutputs + c, gy, gx));
            if (!(score >= opt.conf_threshold) || score <= 0) continue;
            BoxCode t{r.at(b, 0, gy, gx), r.at(b, 1, gy, gx), r.at(b, 2, gy, gx), r.at(b, 3, gy, gx)};
            BoundingBox box = decode_box(t, gx, gy, strides[l], image_size);
            const double x1 = std::clamp(box.x1(), 0.0, 1.0), y1 = std::clamp(box.y1(), 0.0, 1.0);
            const double x2 = std::clamp(box.x2(), 0.0, 1.0), y2 = std::clamp(box.y2(), 0.0, 1.0);
            if (!(x2 > x1 && y2 > y1)) continue;
            cand.push_back({BoundingBox::from_corners(x1, y1, x2, y2, c), score, c});
          }
    }
    if (static_cast<int>(cand.size()) > opt.max_candidates) {
      std::nth_element(cand.begin(), cand.begin() + opt.max_candidates, cand.end(),
                       [](const Detection& a, const Detection& c) { return a.score > c.score; });
      cand.resize(opt.max_candidates);
    }
    out[b] = nms(std::move(cand), opt.iou_threshold, opt.max_det);
  }
  return out;
}

}  // namespace sodgelan::model
