#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "sodgelan/core/box.hpp"
#include "sodgelan/core/error.hpp"

namespace sodgelan::scene {

using Vec3 = Eigen::Vector3d;

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultFovDeg = 45.0;

// Pinhole camera. Camera axes in world frame: x = right, y = down (image rows), z = forward.
// The field of view is vertical.
struct CameraPose {
  Vec3 position = Vec3::Zero();           // km
  Eigen::Quaterniond orientation{1, 0, 0, 0};  // camera -> world
  double fov_deg = kDefaultFovDeg;
  int width = 640, height = 640;

  Eigen::Matrix3d rotation() const { return orientation.normalized().toRotationMatrix(); }
  Vec3 forward() const { return rotation().col(2); }
  double focal_px() const { return (height / 2.0) / std::tan(fov_deg * kPi / 360.0); }

  // World point -> camera coordinates (km).
  Vec3 to_camera(const Vec3& p) const { return rotation().transpose() * (p - position); }

  // Ray direction (world, unnormalized) through image point (u, v) in pixel units.
  Vec3 ray(double u, double v) const {
    const double f = focal_px();
    const Vec3 d((u - width / 2.0) / f, (v - height / 2.0) / f, 1.0);
    return rotation() * d;
  }
};

// Per-frame cache of the camera basis for casting many pixel rays.
struct RayCaster {
  explicit RayCaster(const CameraPose& cam)
      : r(cam.rotation()), f(cam.focal_px()), cx(cam.width / 2.0), cy(cam.height / 2.0) {}
  Vec3 operator()(double u, double v) const { return r * Vec3((u - cx) / f, (v - cy) / f, 1.0); }

  Eigen::Matrix3d r;
  double f, cx, cy;
};

// Camera looking along `forward` with image "up" as close as possible to `up_hint`.
inline CameraPose look_along(const Vec3& position, const Vec3& forward, const Vec3& up_hint, int width, int height,
                             double fov_deg = kDefaultFovDeg) {
  SODGELAN_REQUIRE(forward.norm() > 0, InvalidInput, "camera forward direction is zero");
  const Vec3 z = forward.normalized();
  Vec3 up = up_hint - up_hint.dot(z) * z;
  if (up.norm() < 1e-9) {
    const Vec3 alt = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    up = alt - alt.dot(z) * z;
  }
  const Vec3 y = -up.normalized();  // image rows grow downward
  const Vec3 x = y.cross(z);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  CameraPose cam;
  cam.position = position;
  cam.orientation = Eigen::Quaterniond(r).normalized();
  cam.fov_deg = fov_deg;
  cam.width = width;
  cam.height = height;
  return cam;
}

// Projected image point of a world point; empty when at or behind the camera plane.
inline std::optional<Eigen::Vector2d> project_point(const Vec3& p, const CameraPose& cam) {
  const Vec3 q = cam.to_camera(p);
  if (q.z() <= 0) return std::nullopt;
  const double f = cam.focal_px();
  return Eigen::Vector2d(cam.width / 2.0 + f * q.x() / q.z(), cam.height / 2.0 + f * q.y() / q.z());
}

// Image-plane interval [lo, hi] (in units of tan) covered by a sphere along one axis: the two
// planes through the camera containing the orthogonal image axis and tangent to the sphere.
inline std::pair<double, double> tangent_interval(double a, double z, double r) {
  const double den = z * z - r * r;
  const double root = r * std::sqrt(std::max(0.0, a * a + z * z - r * r));
  return {(a * z - root) / den, (a * z + root) / den};
}

// Pixel-space extent [u1, v1, u2, v2] of the sphere's perspective image, clipped to the
// frame. Empty when the sphere is not entirely in front of the camera or misses the frame.
struct PixelRect {
  double u1, v1, u2, v2;
};

inline std::optional<PixelRect> project_sphere(const Vec3& center, double radius_km, const CameraPose& cam) {
  const Vec3 q = cam.to_camera(center);
  if (q.z() <= radius_km) return std::nullopt;
  const double f = cam.focal_px();
  auto [x1, x2] = tangent_interval(q.x(), q.z(), radius_km);
  auto [y1, y2] = tangent_interval(q.y(), q.z(), radius_km);
  PixelRect r{cam.width / 2.0 + f * x1, cam.height / 2.0 + f * y1, cam.width / 2.0 + f * x2,
              cam.height / 2.0 + f * y2};
  r.u1 = std::max(r.u1, 0.0);
  r.v1 = std::max(r.v1, 0.0);
  r.u2 = std::min(r.u2, static_cast<double>(cam.width));
  r.v2 = std::min(r.v2, static_cast<double>(cam.height));
  if (!(r.u2 > r.u1 && r.v2 > r.v1)) return std::nullopt;
  return r;
}

// Nearest positive ray parameter at which origin + t * dir meets the sphere.
inline std::optional<double> ray_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
  const Vec3 d = dir.normalized();
  const Vec3 v = center - origin;
  const double tc = v.dot(d);
  const double d2 = v.squaredNorm() - tc * tc;
  const double r2 = radius * radius;
  if (d2 > r2) return std::nullopt;
  const double half = std::sqrt(r2 - d2);
  const double t = tc - half > 0 ? tc - half : tc + half;
  if (t <= 0) return std::nullopt;
  return t;
}

}  // namespace sodgelan::scene
