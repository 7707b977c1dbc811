#pragma once

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include "sodgelan/model/decode.hpp"

namespace sodgelan::eval {

using model::kBoxOutputs;

// A positive cell: image b, level l, cell (gx, gy) regresses ground truth `gt` of that image.
struct Target {
  int image = 0, level = 0, gx = 0, gy = 0, gt = 0;
};

// Center-prior assignment. Each box goes to the level whose 4 * stride is closest to its longer
// side (log scale), then to its own cell and to the nearest horizontal and vertical neighbors
// whose centers lie inside the box. A box smaller than a cell therefore has a single positive;
// extra positives around a 1 px object would train duplicates that NMS cannot separate.
// A cell claimed by two boxes keeps the smaller one.
inline std::vector<Target> assign_targets(const std::vector<std::vector<BoundingBox>>& gts,
                                          const std::vector<int>& strides, int image_size) {
  std::map<std::tuple<int, int, int, int>, Target> cells;
  for (int b = 0; b < static_cast<int>(gts.size()); ++b)
    for (int k = 0; k < static_cast<int>(gts[b].size()); ++k) {
      const auto& box = gts[b][k];
      if (!(box.w > 0 && box.h > 0)) continue;
      const double side = std::max(box.w, box.h) * image_size;
      int level = 0;
      double best = 1e300;
      for (int l = 0; l < static_cast<int>(strides.size()); ++l) {
        const double d = std::abs(std::log(side / (4.0 * strides[l])));
        if (d < best - 1e-12) {
          best = d;
          level = l;
        }
      }
      const int s = strides[level], g = image_size / s;
      const double fx = box.cx * image_size / s, fy = box.cy * image_size / s;
      const int gx = std::clamp(static_cast<int>(std::floor(fx)), 0, g - 1);
      const int gy = std::clamp(static_cast<int>(std::floor(fy)), 0, g - 1);
      const int nx = fx - gx < 0.5 ? gx - 1 : gx + 1, ny = fy - gy < 0.5 ? gy - 1 : gy + 1;
      const double hw = box.w * image_size / s / 2, hh = box.h * image_size / s / 2;
      auto inside = [&](int cx, int cy) { return std::abs(cx + 0.5 - fx) < hw && std::abs(cy + 0.5 - fy) < hh; };
      for (auto [cx, cy] : {std::pair{gx, gy}, std::pair{nx, gy}, std::pair{gx, ny}}) {
        if (cx < 0 || cy < 0 || cx >= g || cy >= g || !model::cell_covers(box, cx, cy, s, image_size)) continue;
        if ((cx != gx || cy != gy) && !inside(cx, cy)) continue;
        auto key = std::make_tuple(b, level, cy, cx);
        auto it = cells.find(key);
        if (it == cells.end() || box.area() < gts[b][it->second.gt].area()) cells[key] = {b, level, cx, cy, k};
      }
    }
  std::vector<Target> out;
  for (auto& [key, t] : cells) out.push_back(t);
  return out;
}

namespace detail {

// Forward-mode dual number over the four box regressors.
struct Dual {
  double v = 0;
  std::array<double, 4> d{};

  static Dual constant(double v) { return {v, {}}; }
  static Dual var(double v, int i) {
    Dual r{v, {}};
    r.d[i] = 1;
    return r;
  }
  Dual chain(double value, double slope) const {
    Dual r{value, {}};
    for (int i = 0; i < 4; ++i) r.d[i] = slope * d[i];
    return r;
  }
};

inline Dual operator+(const Dual& a, const Dual& b) {
  Dual r{a.v + b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
inline Dual operator-(const Dual& a, const Dual& b) {
  Dual r{a.v - b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
inline Dual operator*(const Dual& a, const Dual& b) {
  Dual r{a.v * b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
inline Dual operator/(const Dual& a, const Dual& b) {
  Dual r{a.v / b.v, {}};
  for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}
inline Dual operator*(double s, const Dual& a) { return Dual::constant(s) * a; }
inline Dual operator+(const Dual& a, double s) { return a + Dual::constant(s); }
inline Dual operator-(const Dual& a, double s) { return a - Dual::constant(s); }
inline Dual dmin(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
inline Dual dmax(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
inline Dual dexp(const Dual& a) { return a.chain(std::exp(a.v), std::exp(a.v)); }
inline Dual datan(const Dual& a) { return a.chain(std::atan(a.v), 1.0 / (1.0 + a.v * a.v)); }
inline Dual dsigmoid(const Dual& a) {
  const double s = model::sigmoid(a.v);
  return a.chain(s, s * (1 - s));
}

}  // namespace detail

// Complete-IoU between a decoded prediction and its target, both in grid-cell units.
// Returns the CIoU value with its gradient w.r.t. the cell's raw (tx, ty, tw, th).
struct CiouGrad {
  double ciou;
  std::array<double, 4> grad;
};

inline CiouGrad ciou_from_raw(const model::BoxCode& t, int gx, int gy, double tcx, double tcy, double tw,
                              double th) {
  using detail::Dual;
  constexpr double eps = 1e-9;
  const Dual px = Dual::constant(gx - 0.5) + 2.0 * detail::dsigmoid(Dual::var(t.tx, 0));
  const Dual py = Dual::constant(gy - 0.5) + 2.0 * detail::dsigmoid(Dual::var(t.ty, 1));
  auto size = [](double raw, int i) {
    if (raw < model::kMinLogSize || raw > model::kMaxLogSize)
      return Dual::constant(std::exp(std::clamp(raw, model::kMinLogSize, model::kMaxLogSize)));
    return detail::dexp(Dual::var(raw, i));
  };
  const Dual pw = size(t.tw, 2), ph = size(t.th, 3);
  const Dual x1 = px - 0.5 * pw, x2 = px + 0.5 * pw, y1 = py - 0.5 * ph, y2 = py + 0.5 * ph;
  const Dual gx1 = Dual::constant(tcx - tw / 2), gx2 = Dual::constant(tcx + tw / 2);
  const Dual gy1 = Dual::constant(tcy - th / 2), gy2 = Dual::constant(tcy + th / 2);

  const Dual iw = detail::dmax(detail::dmin(x2, gx2) - detail::dmax(x1, gx1), Dual::constant(0));
  const Dual ih = detail::dmax(detail::dmin(y2, gy2) - detail::dmax(y1, gy1), Dual::constant(0));
  const Dual inter = iw * ih;
  const Dual uni = pw * ph + Dual::constant(tw * th) - inter + eps;
  const Dual iou = inter / uni;
  const Dual cw = detail::dmax(x2, gx2) - detail::dmin(x1, gx1);
  const Dual ch = detail::dmax(y2, gy2) - detail::dmin(y1, gy1);
  const Dual c2 = cw * cw + ch * ch + eps;
  const Dual dx = px - tcx, dy = py - tcy;
  const Dual rho2 = dx * dx + dy * dy;
  const Dual da = Dual::constant(std::atan(tw / th)) - detail::datan(pw / ph);
  const Dual v = (4.0 / (std::numbers::pi * std::numbers::pi)) * da * da;
  const double alpha = v.v / (v.v - iou.v + 1 + eps);  // held constant
  const Dual ciou = iou - (rho2 / c2 + alpha * v);
  return {ciou.v, ciou.d};
}

struct LossWeights {
  double box = 7.5;
  double l1 = 1.0;
  double cls = 0.5;
};

struct LossParts {
  double box = 0;    // mean (1 - CIoU) over positives
  double l1 = 0;     // mean L1 of center (cells) and log size over positives
  double cls = 0;    // summed BCE / positives
  double total = 0;  // (box_w * box + l1_w * l1 + cls_w * cls) * batch
  int num_pos = 0;
};

// L1 between the decoded center (cell units) and log size and the target's, with its gradient
// w.r.t. the raw regressors. CIoU alone lets a prediction grow without bound around a target
// much smaller than a cell (the center penalty shrinks faster than the IoU term grows), so this
// term keeps sizes anchored.
inline std::pair<double, std::array<double, 4>> l1_from_raw(const model::BoxCode& t, int gx, int gy, double tcx,
                                                            double tcy, double tw, double th) {
  std::array<double, 4> g{};
  double loss = 0;
  auto center = [&](double raw, int cell, double target, int i) {
    const double s = model::sigmoid(raw), d = cell - 0.5 + 2 * s - target;
    loss += std::abs(d);
    g[i] = (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) * 2 * s * (1 - s);
  };
  auto size = [&](double raw, double target, int i) {
    const double c = std::clamp(raw, model::kMinLogSize, model::kMaxLogSize), d = c - std::log(target);
    loss += std::abs(d);
    g[i] = raw == c ? (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) : 0.0;
  };
  center(t.tx, gx, tcx, 0);
  center(t.ty, gy, tcy, 1);
  size(t.tw, tw, 2);
  size(t.th, th, 3);
  return {loss, g};
}

inline double bce_with_logits(double x, double y) { return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))); }

// Detection loss on raw head outputs [N, 4 + nc, H, W] per level. When `grad` is given it
// receives d total / d raw with the same shapes.
template <class T>
LossParts detection_loss(const std::vector<Tensor<T>>& raw, const std::vector<std::vector<BoundingBox>>& gts,
                         const std::vector<int>& strides, int image_size, const LossWeights& w = {},
                         std::vector<Tensor<T>>* grad = nullptr) {
  SODGELAN_REQUIRE(raw.size() == strides.size() && !raw.empty(), ShapeMismatch, "loss: ", raw.size(),
                   " levels vs ", strides.size(), " strides");
  const int n = raw[0].dim(0), nc = raw[0].dim(1) - kBoxOutputs;
  SODGELAN_REQUIRE(static_cast<int>(gts.size()) == n, ShapeMismatch, "loss: ", gts.size(), " label sets for batch of ",
                   n);
  for (std::size_t l = 0; l < raw.size(); ++l)
    SODGELAN_REQUIRE(raw[l].dim(2) * strides[l] == image_size && raw[l].dim(3) * strides[l] == image_size,
                     ShapeMismatch, "loss: level ", l, " grid does not match stride ", strides[l]);
  for (auto& v : gts)
    for (auto& b : v)
      SODGELAN_REQUIRE(b.class_id >= 0 && b.class_id < nc, InvalidInput, "label class ", b.class_id, " outside [0, ",
                       nc, ")");

  const auto targets = assign_targets(gts, strides, image_size);
  LossParts parts;
  parts.num_pos = static_cast<int>(targets.size());
  const double norm = std::max(1, parts.num_pos);
  const double box_scale = w.box * n / norm, l1_scale = w.l1 * n / norm, cls_scale = w.cls * n / norm;

  if (grad) {
    grad->clear();
    for (auto& r : raw) grad->emplace_back(r.shape());
  }
  // class targets: 1 at positive cells for the box's class
  std::vector<std::vector<unsigned char>> positive(raw.size());
  for (std::size_t l = 0; l < raw.size(); ++l) positive[l].assign(raw[l].size(), 0);
  for (auto& t : targets) {
    const auto& r = raw[static_cast<std::size_t>(t.level)];
    const auto& box = gts[static_cast<std::size_t>(t.image)][static_cast<std::size_t>(t.gt)];
    const std::size_t hw = static_cast<std::size_t>(r.dim(2)) * r.dim(3);
    const std::size_t cell = static_cast<std::size_t>(t.gy) * r.dim(3) + t.gx;
    const std::size_t base = static_cast<std::size_t>(t.image) * r.dim(1) * hw + cell;
    positive[static_cast<std::size_t>(t.level)][base + (kBoxOutputs + box.class_id) * hw] = 1;

    const double s = strides[static_cast<std::size_t>(t.level)];
    model::BoxCode code{r[base], r[base + hw], r[base + 2 * hw], r[base + 3 * hw]};
    const double tcx = box.cx * image_size / s, tcy = box.cy * image_size / s;
    const double tw = box.w * image_size / s, th = box.h * image_size / s;
    const auto c = ciou_from_raw(code, t.gx, t.gy, tcx, tcy, tw, th);
    const auto [l1, l1_grad] = l1_from_raw(code, t.gx, t.gy, tcx, tcy, tw, th);
    parts.box += 1.0 - c.ciou;
    parts.l1 += l1;
    if (grad)
      for (int k = 0; k < 4; ++k)
        (*grad)[static_cast<std::size_t>(t.level)][base + k * hw] +=
            static_cast<T>(l1_scale * l1_grad[k] - box_scale * c.grad[k]);
  }
  for (std::size_t l = 0; l < raw.size(); ++l) {
    const auto& r = raw[l];
    const std::size_t hw = static_cast<std::size_t>(r.dim(2)) * r.dim(3);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < nc; ++c) {
        const std::size_t off = (static_cast<std::size_t>(b) * r.dim(1) + kBoxOutputs + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double x = r[off + i], y = positive[l][off + i];
          parts.cls += bce_with_logits(x, y);
          if (grad) (*grad)[l][off + i] = static_cast<T>(cls_scale * (model::sigmoid(x) - y));
        }
      }
  }
  parts.box /= norm;
  parts.l1 /= norm;
  parts.cls /= norm;
  parts.total = (w.box * parts.box + w.l1 * parts.l1 + w.cls * parts.cls) * n;
  return parts;
}

}  // namespace sodgelan::eval
