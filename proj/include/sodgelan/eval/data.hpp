#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sodgelan/core/rng.hpp"
#include "sodgelan/core/tensor.hpp"
#include "sodgelan/scene/dataset.hpp"
#include "sodgelan/scene/png_io.hpp"

namespace sodgelan::eval {

// Training hyperparameter profiles. ADJUSTED turns mosaic off; DEFAULT keeps the usual YOLO
// augmentation (mosaic, flips, brightness gain).
enum class HyperProfile { Adjusted, Default };

inline std::string profile_name(HyperProfile p) { return p == HyperProfile::Adjusted ? "adjusted" : "default"; }
inline HyperProfile parse_profile(const std::string& s) {
  if (s == "adjusted") return HyperProfile::Adjusted;
  if (s == "default") return HyperProfile::Default;
  throw ConfigError("unknown profile '" + s + "' (expected adjusted or default)");
}

// Images as planar RGB floats in [0, 1] with normalized labels.
struct DetectionSet {
  int image_size = 0;
  std::vector<std::vector<float>> images;  // 3 * S * S, CHW
  std::vector<std::vector<BoundingBox>> labels;
  std::vector<std::string> names;
  std::vector<scene::DistanceBin> bins;

  std::size_t size() const { return images.size(); }

  DetectionSet select(const std::vector<std::size_t>& idx) const {
    DetectionSet s;
    s.image_size = image_size;
    for (auto i : idx) {
      SODGELAN_REQUIRE(i < size(), InvalidInput, "image index ", i, " out of range (", size(), " images)");
      s.images.push_back(images[i]);
      s.labels.push_back(labels[i]);
      s.names.push_back(names[i]);
      if (!bins.empty()) s.bins.push_back(bins[i]);
    }
    return s;
  }
  DetectionSet head(std::size_t n) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(n, size()); ++i) idx.push_back(i);
    return select(idx);
  }
  // First n images taking the distance bins in turn (near, mid, far, near, ...).
  DetectionSet balanced_head(std::size_t n) const {
    if (bins.empty()) return head(n);
    std::array<std::vector<std::size_t>, 3> per;
    for (std::size_t i = 0; i < size(); ++i) per[static_cast<std::size_t>(bins[i])].push_back(i);
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; idx.size() < std::min(n, size()); ++k)
      for (auto& p : per)
        if (k < p.size() && idx.size() < n) idx.push_back(p[k]);
    std::sort(idx.begin(), idx.end());
    return select(idx);
  }
};

// Bilinear resample of an RGB8 raster to planar floats.
inline std::vector<float> to_planar(const scene::Image& img, int size) {
  std::vector<float> out(static_cast<std::size_t>(3) * size * size);
  const double sx = static_cast<double>(img.width) / size, sy = static_cast<double>(img.height) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double fx = (x + 0.5) * sx - 0.5, fy = (y + 0.5) * sy - 0.5;
      fx = std::clamp(fx, 0.0, img.width - 1.0);
      fy = std::clamp(fy, 0.0, img.height - 1.0);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      const double ax = fx - x0, ay = fy - y0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - ay) * ((1 - ax) * img.px(x0, y0)[c] + ax * img.px(x1, y0)[c]) +
                         ay * ((1 - ax) * img.px(x0, y1)[c] + ax * img.px(x1, y1)[c]);
        out[(static_cast<std::size_t>(c) * size + y) * size + x] = static_cast<float>(v / 255.0);
      }
    }
  return out;
}

// Loads one split ("train" or "test") of a generated dataset, resampled to `image_size`.
inline DetectionSet load_split(const std::filesystem::path& root, const std::string& split, int image_size) {
  SODGELAN_REQUIRE(image_size > 0, ConfigError, "image size must be positive");
  const auto manifest = scene::load_manifest(root);
  DetectionSet s;
  s.image_size = image_size;
  for (auto& e : manifest.images) {
    if (e.split != split) continue;
    s.images.push_back(to_planar(scene::read_png(root / e.image), image_size));
    s.labels.push_back(scene::read_labels(root / e.label));
    s.names.push_back(e.name);
    s.bins.push_back(e.bin);
  }
  SODGELAN_REQUIRE(!s.images.empty(), InvalidInput, "split '", split, "' of ", root.string(), " has no images");
  return s;
}

namespace detail {

inline void flip_horizontal(std::vector<float>& img, std::vector<BoundingBox>& boxes, int s) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y) {
      float* row = img.data() + (static_cast<std::size_t>(c) * s + y) * s;
      std::reverse(row, row + s);
    }
  for (auto& b : boxes) b.cx = 1.0 - b.cx;
}

inline void flip_vertical(std::vector<float>& img, std::vector<BoundingBox>& boxes, int s) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s / 2; ++y)
      std::swap_ranges(img.begin() + (static_cast<std::ptrdiff_t>(c) * s + y) * s,
                       img.begin() + (static_cast<std::ptrdiff_t>(c) * s + y + 1) * s,
                       img.begin() + (static_cast<std::ptrdiff_t>(c) * s + s - 1 - y) * s);
  for (auto& b : boxes) b.cy = 1.0 - b.cy;
}

// 2x2 mosaic of four half-size images.
inline void mosaic(const DetectionSet& set, const std::array<std::size_t, 4>& idx, std::vector<float>& img,
                   std::vector<BoundingBox>& boxes) {
  const int s = set.image_size, h = s / 2;
  img.assign(static_cast<std::size_t>(3) * s * s, 0.0f);
  boxes.clear();
  for (int q = 0; q < 4; ++q) {
    const auto& src = set.images[idx[q]];
    const int ox = (q % 2) * h, oy = (q / 2) * h;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < h; ++x) {
          auto at = [&](int yy, int xx) { return src[(static_cast<std::size_t>(c) * s + yy) * s + xx]; };
          img[(static_cast<std::size_t>(c) * s + oy + y) * s + ox + x] =
              0.25f * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1));
        }
    for (auto b : set.labels[idx[q]]) {
      b.cx = (b.cx + q % 2) / 2;
      b.cy = (b.cy + q / 2) / 2;
      b.w /= 2;
      b.h /= 2;
      boxes.push_back(b);
    }
  }
}

}  // namespace detail

// Augmented copy of image `i`. Randomness comes only from (seed, epoch, i), so the result does
// not depend on batch order.
inline void augmented_sample(const DetectionSet& set, std::size_t i, HyperProfile profile, std::uint64_t seed,
                             int epoch, std::vector<float>& img, std::vector<BoundingBox>& boxes) {
  Rng rng = make_rng(seed, {0x617567ULL, static_cast<std::uint64_t>(epoch), i});
  const int s = set.image_size;
  if (profile == HyperProfile::Default && set.size() >= 4 && s % 2 == 0) {
    std::array<std::size_t, 4> idx{i, 0, 0, 0};
    for (int q = 1; q < 4; ++q) idx[q] = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(set.size()) - 1));
    // the anchor image lands in a random quadrant
    std::swap(idx[0], idx[static_cast<std::size_t>(uniform_int(rng, 0, 3))]);
    detail::mosaic(set, idx, img, boxes);
  } else {
    img = set.images[i];
    boxes = set.labels[i];
  }
  if (uniform01(rng) < 0.5) detail::flip_horizontal(img, boxes, s);
  if (uniform01(rng) < 0.5) detail::flip_vertical(img, boxes, s);
  if (profile == HyperProfile::Default) {
    const float gain = static_cast<float>(uniform(rng, 0.6, 1.4));
    for (auto& v : img) v = std::min(1.0f, v * gain);
  }
}

// Stacks images into an [N, 3, S, S] batch.
template <class T>
Tensor<T> stack_images(const std::vector<const std::vector<float>*>& imgs, int s) {
  Tensor<T> out({static_cast<int>(imgs.size()), 3, s, s});
  const std::size_t per = static_cast<std::size_t>(3) * s * s;
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    SODGELAN_REQUIRE(imgs[b]->size() == per, ShapeMismatch, "image ", b, " has ", imgs[b]->size(), " values, expected ",
                     per);
    std::copy(imgs[b]->begin(), imgs[b]->end(), out.data() + b * per);
  }
  return out;
}

}  // namespace sodgelan::eval
