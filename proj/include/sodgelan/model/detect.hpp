#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sodgelan/blocks/gelan.hpp"

namespace sodgelan::model {

inline constexpr int kBoxOutputs = 4;

struct DetectSpec {
  std::vector<int> in_channels;  // one per level
  std::vector<int> strides;
  int num_classes = 1;
  int box_min = 64;  // floor on the box-branch width
  int image_size = 640;

  int box_width() const { return std::max({in_channels.front() / 4, box_min, 16}); }
  int cls_width() const { return std::max(in_channels.front(), std::min(2 * num_classes, 128)); }
};

// Decoupled per-level head: a box branch (3x3, grouped 3x3, 1x1 -> 4) and a class branch
// (3x3, 3x3, 1x1 -> nc). Each level emits [N, 4 + nc, H, W] raw logits.
template <class T>
class Detect {
 public:
  Detect(DetectSpec spec, Rng& rng) : spec_(std::move(spec)) {
    SODGELAN_REQUIRE(spec_.in_channels.size() == spec_.strides.size() && !spec_.strides.empty(), ConfigError,
                     "detect head: channel and stride lists differ");
    SODGELAN_REQUIRE(spec_.num_classes > 0, ConfigError, "detect head: num_classes must be positive");
    const int c2 = spec_.box_width(), c3 = spec_.cls_width();
    SODGELAN_REQUIRE(c2 % 4 == 0, ConfigError, "detect head: box width ", c2, " not divisible by 4 groups");
    for (std::size_t i = 0; i < spec_.strides.size(); ++i) {
      const int ch = spec_.in_channels[i];
      auto box = std::make_unique<nn::Sequential<T>>();
      box->add("0", blocks::make_conv<T>(ch, c2, 3, 1, rng));
      box->add("1", blocks::make_conv<T>(c2, c2, 3, 1, rng, 4));
      auto box_out = std::make_unique<nn::Conv2d<T>>(nn::Conv2dSpec{c2, kBoxOutputs, 1, 1, 1, true}, rng);
      box_out->bias().value.fill(T(0));
      box->add("2", std::move(box_out));
      auto cls = std::make_unique<nn::Sequential<T>>();
      cls->add("0", blocks::make_conv<T>(ch, c3, 3, 1, rng));
      cls->add("1", blocks::make_conv<T>(c3, c3, 3, 1, rng));
      auto cls_out = std::make_unique<nn::Conv2d<T>>(nn::Conv2dSpec{c3, spec_.num_classes, 1, 1, 1, true}, rng);
      // prior: about 5 objects per image spread over the level's cells
      const double cells = std::pow(static_cast<double>(spec_.image_size) / spec_.strides[i], 2);
      cls_out->bias().value.fill(static_cast<T>(std::log(5.0 / spec_.num_classes / cells)));
      cls->add("2", std::move(cls_out));
      box_.push_back(std::move(box));
      cls_.push_back(std::move(cls));
    }
  }

  const DetectSpec& spec() const { return spec_; }
  int levels() const { return static_cast<int>(spec_.strides.size()); }

  std::vector<Tensor<T>> forward(const std::vector<const Tensor<T>*>& feats) {
    SODGELAN_REQUIRE(static_cast<int>(feats.size()) == levels(), ShapeMismatch, "detect head expects ", levels(),
                     " feature maps, got ", feats.size());
    std::vector<Tensor<T>> out;
    for (int i = 0; i < levels(); ++i) {
      Tensor<T> b = box_[i]->forward(*feats[i]);
      Tensor<T> c = cls_[i]->forward(*feats[i]);
      out.push_back(concat_channels<T>({&b, &c}));
    }
    return out;
  }

  std::vector<Tensor<T>> backward(const std::vector<Tensor<T>>& dy) {
    std::vector<Tensor<T>> dx;
    for (int i = 0; i < levels(); ++i) {
      Tensor<T> g = box_[i]->backward(slice_channels(dy[i], 0, kBoxOutputs));
      g += cls_[i]->backward(slice_channels(dy[i], kBoxOutputs, spec_.num_classes));
      dx.push_back(std::move(g));
    }
    return dx;
  }

  void collect_params(const std::string& prefix, nn::ParamList<T>& out) {
    for (int i = 0; i < levels(); ++i) {
      box_[i]->collect_params(nn::join_path(prefix, "box" + std::to_string(i)), out);
      cls_[i]->collect_params(nn::join_path(prefix, "cls" + std::to_string(i)), out);
    }
  }
  void collect_buffers(const std::string& prefix, nn::BufferList<T>& out) {
    for (int i = 0; i < levels(); ++i) {
      box_[i]->collect_buffers(nn::join_path(prefix, "box" + std::to_string(i)), out);
      cls_[i]->collect_buffers(nn::join_path(prefix, "cls" + std::to_string(i)), out);
    }
  }
  std::vector<Shape> infer(const std::vector<Shape>& in, nn::FlopCounter* f) const {
    std::vector<Shape> out;
    for (int i = 0; i < levels(); ++i) {
      Shape s = box_[i]->infer(in[i], f);
      cls_[i]->infer(in[i], f);
      s[1] = kBoxOutputs + spec_.num_classes;
      out.push_back(s);
    }
    return out;
  }
  void set_mode(nn::Mode m) {
    for (auto& b : box_) b->set_mode(m);
    for (auto& c : cls_) c->set_mode(m);
  }

 private:
  DetectSpec spec_;
  std::vector<std::unique_ptr<nn::Sequential<T>>> box_, cls_;
};

}  // namespace sodgelan::model
