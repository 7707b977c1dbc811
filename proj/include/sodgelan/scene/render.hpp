#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "sodgelan/core/rng.hpp"
#include "sodgelan/scene/satellite.hpp"

namespace sodgelan::scene {

// 8-bit interleaved RGB raster.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* px(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* px(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  bool operator==(const Image&) const = default;
};

// Pixels covered by a satellite: every pixel whose center ray hits the bounding sphere, plus
// the pixel holding the projected center, so distant satellites still cover one pixel.
struct Footprint {
  std::vector<int> pixels;  // y * width + x, ascending
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // inclusive pixel bounds

  bool empty() const { return pixels.empty(); }
  BoundingBox box(int width, int height, int class_id = 0) const {
    return BoundingBox::from_corners(static_cast<double>(x1) / width, static_cast<double>(y1) / height,
                                     static_cast<double>(x2 + 1) / width, static_cast<double>(y2 + 1) / height,
                                     class_id);
  }
};

inline Footprint footprint(const SatelliteState& s, const CameraPose& cam, bool center_pixel = true) {
  Footprint fp;
  const double r = s.radius_km();
  const Vec3 q = cam.to_camera(s.position);
  if (q.z() <= r) return fp;
  std::vector<int> px;
  const RayCaster ray(cam);
  if (auto rect = project_sphere(s.position, r, cam)) {
    const int x0 = std::max(0, static_cast<int>(std::floor(rect->u1)) - 1);
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(rect->u2)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(rect->v1)) - 1);
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(rect->v2)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (ray_sphere(cam.position, ray(x + 0.5, y + 0.5), s.position, r)) px.push_back(y * cam.width + x);
  }
  if (auto c = center_pixel ? project_point(s.position, cam) : std::nullopt) {
    const int cx = static_cast<int>(std::floor(c->x())), cy = static_cast<int>(std::floor(c->y()));
    if (cx >= 0 && cx < cam.width && cy >= 0 && cy < cam.height) {
      const int idx = cy * cam.width + cx;
      if (std::find(px.begin(), px.end(), idx) == px.end()) px.push_back(idx);
    }
  }
  if (px.empty()) return fp;
  std::sort(px.begin(), px.end());
  fp.x1 = fp.y1 = 1 << 30;
  fp.x2 = fp.y2 = -1;
  for (int i : px) {
    const int x = i % cam.width, y = i / cam.width;
    fp.x1 = std::min(fp.x1, x);
    fp.x2 = std::max(fp.x2, x);
    fp.y1 = std::min(fp.y1, y);
    fp.y2 = std::max(fp.y2, y);
  }
  fp.pixels = std::move(px);
  return fp;
}

// Normalized box of the sphere's projected extent (continuous, clipped to the frame).
inline std::optional<BoundingBox> project_bbox(const SatelliteState& s, const CameraPose& cam) {
  auto r = project_sphere(s.position, s.radius_km(), cam);
  if (!r) return std::nullopt;
  return BoundingBox::from_corners(r->u1 / cam.width, r->v1 / cam.height, r->u2 / cam.width, r->v2 / cam.height);
}

struct RenderOptions {
  std::uint64_t seed = 0;
  bool stars = true;
  bool earth = true;
  double ambient = 0.25;
  double star_density = 1.0 / 600;  // stars per pixel
  // Stars stay below the ambient floor of a lit satellite, as with an exposure set for sunlit
  // targets.
  double star_min = 0.05, star_max = 0.2;
  double center_pixel_range_km = 5.0;  // farther satellites draw only where pixel rays hit them
};

struct RenderResult {
  Image image;
  std::vector<int> owner;  // satellite id drawn at each pixel, -1 for background
};

// Black sky, seeded stars, Lambert-lit Earth and satellites (far to near, so nearer ones win).
inline RenderResult render(const std::vector<SatelliteState>& sats, const CameraPose& cam, const RenderOptions& opt = {},
                           int exclude_id = -1) {
  const int w = cam.width, h = cam.height;
  RenderResult out{Image(w, h), std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
  Rng rng = make_rng(opt.seed, {0x72656e646572ULL});
  const Vec3 sun = random_unit(rng);
  const RayCaster ray(cam);
  auto put = [&](int x, int y, double r, double g, double b) {
    auto* p = out.image.px(x, y);
    p[0] = static_cast<std::uint8_t>(std::lround(std::clamp(r, 0.0, 1.0) * 255));
    p[1] = static_cast<std::uint8_t>(std::lround(std::clamp(g, 0.0, 1.0) * 255));
    p[2] = static_cast<std::uint8_t>(std::lround(std::clamp(b, 0.0, 1.0) * 255));
  };

  if (opt.stars) {
    const int n = static_cast<int>(std::lround(w * h * opt.star_density));
    for (int i = 0; i < n; ++i) {
      const int x = uniform_int(rng, 0, w - 1), y = uniform_int(rng, 0, h - 1);
      const double v = uniform(rng, opt.star_min, opt.star_max);
      put(x, y, v, v, v);
    }
  }
  if (opt.earth) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Vec3 d = ray(x + 0.5, y + 0.5);
        if (auto t = ray_sphere(cam.position, d, Vec3::Zero(), kEarthRadiusKm)) {
          const Vec3 n = (cam.position + *t * d.normalized()).normalized();
          const double lit = 0.08 + 0.42 * std::max(0.0, n.dot(sun));
          put(x, y, 0.35 * lit, 0.55 * lit, lit);
        }
      }
  }

  std::vector<const SatelliteState*> order;
  for (auto& s : sats)
    if (s.id != exclude_id) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [&](const SatelliteState* a, const SatelliteState* b) {
    return (a->position - cam.position).squaredNorm() > (b->position - cam.position).squaredNorm();
  });
  for (const auto* s : order) {
    const bool close = (s->position - cam.position).norm() <= opt.center_pixel_range_km;
    const Footprint fp = footprint(*s, cam, close);
    // per-satellite tint: warm foil to white
    Rng tint_rng = make_rng(static_cast<std::uint64_t>(s->id), {opt.seed, 0x74696e74ULL});
    const double warm = uniform(tint_rng, 0.0, 0.3);
    const Vec3 facing = (cam.position - s->position).normalized();
    for (int i : fp.pixels) {
      const int x = i % w, y = i / w;
      const Vec3 d = ray(x + 0.5, y + 0.5);
      Vec3 normal = facing;
      if (auto t = ray_sphere(cam.position, d, s->position, s->radius_km()))
        normal = (cam.position + *t * d.normalized() - s->position).normalized();
      const double v = opt.ambient + (1 - opt.ambient) * std::max(0.0, normal.dot(sun));
      put(x, y, v, v * (1 - 0.3 * warm), v * (1 - warm));
      out.owner[static_cast<std::size_t>(i)] = s->id;
    }
  }
  return out;
}

}  // namespace sodgelan::scene
