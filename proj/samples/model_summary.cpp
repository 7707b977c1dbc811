// Parameter and compute counts for every variant.
//   sample_model_summary [full|tiny]
#include <cstdio>
#include <string>

#include "sodgelan/model/detection_model.hpp"

using namespace sodgelan;

int main(int argc, char** argv) {
  const auto scale = model::parse_scale(argc > 1 ? argv[1] : "full");
  std::printf("%-16s %12s %10s %6s\n", "variant", "params", "GFLOPs", "input");
  for (auto v : model::kAllVariants) {
    model::DetectionModel<float> m(v, scale, 1, 1);
    std::printf("%-16s %12zu %10.3f %6d\n", std::string(model::variant_name(v)).c_str(), m.count_parameters(),
                m.count_gflops(), m.input_size());
  }
}
