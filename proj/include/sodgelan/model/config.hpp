#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "sodgelan/blocks/gelan.hpp"

namespace sodgelan::model {

enum class ModelVariant { GelanT, GelanSE, GelanViT, GelanViTSE, GelanRepViT, GelanRepViTSE };
enum class ScaleProfile { Full, Tiny };

// Table order.
inline constexpr std::array<ModelVariant, 6> kAllVariants{ModelVariant::GelanT,     ModelVariant::GelanSE,
                                                          ModelVariant::GelanViT,   ModelVariant::GelanViTSE,
                                                          ModelVariant::GelanRepViT, ModelVariant::GelanRepViTSE};

inline std::string_view variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::GelanT: return "gelan-t";
    case ModelVariant::GelanSE: return "gelan-se";
    case ModelVariant::GelanViT: return "gelan-vit";
    case ModelVariant::GelanViTSE: return "gelan-vit-se";
    case ModelVariant::GelanRepViT: return "gelan-repvit";
    case ModelVariant::GelanRepViTSE: return "gelan-repvit-se";
  }
  return "?";
}

inline ModelVariant parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw ConfigError(detail::concat("unknown variant '", s,
                                   "' (expected gelan-t, gelan-se, gelan-vit, gelan-vit-se, gelan-repvit, "
                                   "gelan-repvit-se)"));
}

inline std::string_view scale_name(ScaleProfile s) { return s == ScaleProfile::Full ? "full" : "tiny"; }

inline ScaleProfile parse_scale(std::string_view s) {
  if (s == "full") return ScaleProfile::Full;
  if (s == "tiny") return ScaleProfile::Tiny;
  throw ConfigError(detail::concat("unknown scale '", s, "' (expected full or tiny)"));
}

inline bool has_se(ModelVariant v) {
  return v == ModelVariant::GelanSE || v == ModelVariant::GelanViTSE || v == ModelVariant::GelanRepViTSE;
}
inline bool has_vit_pathway(ModelVariant v) { return v == ModelVariant::GelanViT || v == ModelVariant::GelanViTSE; }
inline bool has_embedded_vit(ModelVariant v) {
  return v == ModelVariant::GelanRepViT || v == ModelVariant::GelanRepViTSE;
}
// The variant with the SE stages removed (identity for non-SE variants).
inline ModelVariant base_variant(ModelVariant v) {
  switch (v) {
    case ModelVariant::GelanSE: return ModelVariant::GelanT;
    case ModelVariant::GelanViTSE: return ModelVariant::GelanViT;
    case ModelVariant::GelanRepViTSE: return ModelVariant::GelanRepViT;
    default: return v;
  }
}

// Global transformer pathway on the stride-32 map, fused into the last two head modules.
struct ViTPathway {
  int patch_size = 1;
  int embed_dim = 64;
  int depth = 1;
  int num_heads = 4;
  double mlp_ratio = 2.0;
  int out_channels = 32;
};

// Widths of every stage. Aggregation modules use mid = out and branch = mid / 2 unless noted.
struct ArchConfig {
  int input_size = 640;
  int num_classes = 1;
  int stem1 = 16, stem2 = 32;
  int elan1_out = 32, elan1_mid = 32, elan1_branch = 16;
  int b3 = 64, b4 = 96, b5 = 128;  // backbone stride 8/16/32 widths
  int spp_hidden = 64;
  int h4a = 96;   // top-down stride-16 module
  int h3 = 64;    // stride-8 output module
  int down3 = 48;
  int h4b = 96;   // stride-16 output module
  int h4b_mid = 96, h4b_branch = 48;
  int down4 = 64;
  int h5 = 128;   // stride-32 output module
  int depth = 3;  // RepNCSP depth inside each branch; 0 = single conv
  int box_min = 64;
  bool se_heads = false;
  int se_ratio = se::kDefaultReduction;
  std::optional<ViTPathway> vit;
  std::optional<blocks::EmbeddedViT> repvit;  // placed in the stride-32 backbone module
};

// GELAN-t mirrors the public YOLOv9-t layout. The reduced base used by the SE, ViT and RepViT
// families narrows the stride-16 stages to 64 channels and uses single-depth branches.
inline ArchConfig make_arch(ModelVariant v, ScaleProfile scale, int num_classes = 1) {
  SODGELAN_REQUIRE(num_classes > 0, ConfigError, "num_classes must be positive");
  ArchConfig a;
  a.num_classes = num_classes;
  if (v != ModelVariant::GelanT) {
    a.b4 = 64;
    a.h4a = 64;
    a.h4b = a.h4b_mid = 64;
    a.h4b_branch = 32;
    a.depth = 1;
  }
  if (has_vit_pathway(v)) {
    a.h4b_mid = 128;
    a.h4b_branch = 64;
    a.vit = ViTPathway{4, 416, 3, 8, 2.0, 128};
  }
  if (has_embedded_vit(v)) a.repvit = blocks::EmbeddedViT{20, 20, 2, 16, 2, 2.0, 1};
  a.se_heads = has_se(v);

  if (scale == ScaleProfile::Tiny) {
    auto q = [](int c) { return std::max(2, c / 4); };
    a.input_size = 160;
    a.stem1 = q(a.stem1);
    a.stem2 = q(a.stem2);
    a.elan1_out = q(a.elan1_out);
    a.elan1_mid = q(a.elan1_mid);
    a.elan1_branch = q(a.elan1_branch);
    a.b3 = q(a.b3);
    a.b4 = q(a.b4);
    a.b5 = q(a.b5);
    a.spp_hidden = q(a.spp_hidden);
    a.h4a = q(a.h4a);
    a.h3 = q(a.h3);
    a.down3 = q(a.down3);
    a.h4b = q(a.h4b);
    a.h4b_mid = q(a.h4b_mid);
    a.h4b_branch = q(a.h4b_branch);
    a.down4 = q(a.down4);
    a.h5 = q(a.h5);
    a.depth = 0;
    a.box_min = 16;
    if (a.vit) a.vit = ViTPathway{1, 64, 1, 4, 2.0, 32};
    if (a.repvit) a.repvit = blocks::EmbeddedViT{5, 5, 1, 16, 2, 2.0, 1};
  }
  return a;
}

}  // namespace sodgelan::model
