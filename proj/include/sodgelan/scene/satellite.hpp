#pragma once

#include <vector>

#include "sodgelan/core/rng.hpp"
#include "sodgelan/scene/geometry.hpp"

namespace sodgelan::scene {

struct SatelliteState {
  int id = 0;
  Vec3 position = Vec3::Zero();  // km, Earth-centered
  double extent_m = 1.0;         // bounding-sphere diameter
  int cluster_id = 0;
  bool is_center = false;

  double radius_km() const { return extent_m / 2000.0; }
  double altitude_km() const { return position.norm() - kEarthRadiusKm; }
};

// How satellites gather around each cluster center. Observers are the spec'd uniform cluster;
// the optional core is a tight swarm used to produce crowded multi-object frames.
struct ClusterLayout {
  int min_extra = 1, max_extra = 20;
  double radius_km = 5.0;
  int core_min = 0, core_max = 0;
  double core_radius_min_km = 0.3, core_radius_max_km = 0.8;
  double min_altitude_km = 500, max_altitude_km = 600;
  double min_extent_m = 1, max_extent_m = 10;
  double min_separation_km = 0.02;
};

inline ClusterLayout single_layout() { return {}; }
inline ClusterLayout multi_layout() {
  ClusterLayout l;
  l.core_min = 9;
  l.core_max = 30;
  return l;
}

inline Vec3 random_unit(Rng& rng) {
  const double z = uniform(rng, -1.0, 1.0), phi = uniform(rng, 0.0, 2 * kPi);
  const double s = std::sqrt(std::max(0.0, 1 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

inline Vec3 random_in_ball(Rng& rng, double radius) { return radius * std::cbrt(uniform01(rng)) * random_unit(rng); }

// n satellites grouped in clusters; every satellite has a neighbor within the layout radius.
inline std::vector<SatelliteState> spawn_batch(std::uint64_t seed, int n = 1000, const ClusterLayout& layout = {}) {
  SODGELAN_REQUIRE(n >= 2, InvalidInput, "spawn_batch needs n >= 2 (got ", n, "): a lone satellite has no neighbor");
  SODGELAN_REQUIRE(layout.min_extra >= 1 && layout.max_extra >= layout.min_extra && layout.core_max >= layout.core_min &&
                       layout.core_min >= 0,
                   ConfigError, "invalid cluster layout counts");
  Rng rng = make_rng(seed, {0x7370617776ULL});
  std::vector<SatelliteState> out;
  out.reserve(static_cast<std::size_t>(n));
  int cluster = 0;
  while (static_cast<int>(out.size()) < n) {
    const int remaining = n - static_cast<int>(out.size());
    const int core = layout.core_max > 0 ? uniform_int(rng, layout.core_min, layout.core_max) : 0;
    const int extra = uniform_int(rng, layout.min_extra, layout.max_extra);
    int size = std::min(1 + core + extra, remaining);
    if (remaining - size == 1) size = size >= 3 ? size - 1 : size + 1;  // never strand a single satellite

    const double alt = uniform(rng, layout.min_altitude_km, layout.max_altitude_km);
    const Vec3 center = (kEarthRadiusKm + alt) * random_unit(rng);
    const double core_radius = uniform(rng, layout.core_radius_min_km, layout.core_radius_max_km);
    const std::size_t first = out.size();
    for (int k = 0; k < size; ++k) {
      SatelliteState s;
      s.id = static_cast<int>(out.size());
      s.cluster_id = cluster;
      s.is_center = k == 0;
      s.extent_m = uniform(rng, layout.min_extent_m, layout.max_extent_m);
      if (k == 0) {
        s.position = center;
      } else {
        const double r = k <= core ? core_radius : layout.radius_km;
        bool clear = false;
        while (!clear) {
          s.position = center + random_in_ball(rng, r);
          clear = true;
          for (std::size_t j = first; j < out.size(); ++j)
            if ((out[j].position - s.position).norm() < layout.min_separation_km) clear = false;
        }
      }
      out.push_back(s);
    }
    ++cluster;
  }
  return out;
}

}  // namespace sodgelan::scene
