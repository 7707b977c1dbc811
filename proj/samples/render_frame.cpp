// Renders one frame from a freshly spawned constellation and prints its labels.
//   sample_render_frame [seed] [size] [out.png]
#include <cstdio>
#include <cstdlib>
#include <string>

#include "sodgelan/scene/dataset.hpp"

using namespace sodgelan;
using namespace sodgelan::scene;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const int size = argc > 2 ? std::atoi(argv[2]) : 640;
  const std::string out = argc > 3 ? argv[3] : "frame.png";

  const auto sats = spawn_batch(seed, 1000);
  const auto& host = sats.front();
  const auto scene = neighborhood(sats, host.position);
  const CameraPose cam = aim_camera(host, scene, size, size);
  const auto labels = annotate(scene, host.id, cam);

  RenderOptions opt;
  opt.seed = seed;
  write_png(out, render(scene, cam, opt, host.id).image);

  std::printf("host %d, %zu satellites nearby, wrote %s\n", host.id, scene.size() - 1, out.c_str());
  for (auto& a : labels)
    std::printf("  sat %4d at %6.3f km (%s): %s", a.satellite_id, a.distance_km,
                bin_name(bin_by_distance(a.distance_km)).c_str(), format_labels({a.box}).c_str());
}
