#pragma once

#include <optional>
#include <string>

#include "sodgelan/blocks/vit.hpp"
#include "sodgelan/se/se_block.hpp"

namespace sodgelan::blocks {

using nn::Activation;
using nn::ConvBlock;
using nn::ConvSpec;
using nn::Mode;
using nn::Module;
using nn::ModulePtr;

inline ConvSpec conv_spec(int c1, int c2, int k = 1, int s = 1, int g = 1, bool act = true) {
  return ConvSpec{c1, c2, k, s, g, true, act ? Activation::SiLU : Activation::Identity};
}

template <class T>
ModulePtr<T> make_conv(int c1, int c2, int k, int s, Rng& rng, int g = 1, bool act = true) {
  return std::make_unique<ConvBlock<T>>(conv_spec(c1, c2, k, s, g, act), rng);
}

// Re-parameterizable conv: SiLU(bn(conv3x3(x)) + bn(conv1x1(x))). Deploy-time fusion is not done.
template <class T>
class RepConvN : public Module<T> {
 public:
  RepConvN(int c1, int c2, Rng& rng)
      : conv3_(conv_spec(c1, c2, 3, 1, 1, false), rng), conv1_(conv_spec(c1, c2, 1, 1, 1, false), rng) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = conv3_.forward(x);
    y += conv1_.forward(x);
    return act_.forward(y);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = act_.backward(dy);
    Tensor<T> dx = conv3_.backward(g);
    dx += conv1_.backward(g);
    return dx;
  }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    conv3_.collect_params(nn::join_path(p, "conv1"), out);
    conv1_.collect_params(nn::join_path(p, "conv2"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    conv3_.collect_buffers(nn::join_path(p, "conv1"), out);
    conv1_.collect_buffers(nn::join_path(p, "conv2"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    conv1_.infer(in, f);
    return conv3_.infer(in, f);
  }
  std::string type_name() const override { return "RepConvN"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    conv3_.set_mode(m);
    conv1_.set_mode(m);
    act_.set_mode(m);
  }

 private:
  ConvBlock<T> conv3_, conv1_;
  nn::SiLU<T> act_;
};

// x + cv2(cv1(x)) when shapes allow the shortcut.
template <class T>
class RepNBottleneck : public Module<T> {
 public:
  RepNBottleneck(int c1, int c2, bool shortcut, Rng& rng)
      : cv1_(c1, c2, rng), cv2_(conv_spec(c2, c2, 3), rng), add_(shortcut && c1 == c2) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = cv2_.forward(cv1_.forward(x));
    if (add_) y += x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = cv1_.backward(cv2_.backward(dy));
    if (add_) dx += dy;
    return dx;
  }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_.collect_params(nn::join_path(p, "cv1"), out);
    cv2_.collect_params(nn::join_path(p, "cv2"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_.collect_buffers(nn::join_path(p, "cv1"), out);
    cv2_.collect_buffers(nn::join_path(p, "cv2"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override { return cv2_.infer(cv1_.infer(in, f), f); }
  std::string type_name() const override { return "RepNBottleneck"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    cv1_.set_mode(m);
    cv2_.set_mode(m);
  }

 private:
  RepConvN<T> cv1_;
  ConvBlock<T> cv2_;
  bool add_;
};

// Cross-stage partial stack: cv3(cat(m(cv1(x)), cv2(x))).
template <class T>
class RepNCSP : public Module<T> {
 public:
  RepNCSP(int c1, int c2, int n, Rng& rng) : hidden_(std::max(1, c2 / 2)) {
    SODGELAN_REQUIRE(n >= 1, ConfigError, "RepNCSP needs depth >= 1");
    cv1_ = make_conv<T>(c1, hidden_, 1, 1, rng);
    cv2_ = make_conv<T>(c1, hidden_, 1, 1, rng);
    cv3_ = make_conv<T>(2 * hidden_, c2, 1, 1, rng);
    for (int i = 0; i < n; ++i)
      m_.add(std::to_string(i), std::make_unique<RepNBottleneck<T>>(hidden_, hidden_, true, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> a = m_.forward(cv1_->forward(x));
    Tensor<T> b = cv2_->forward(x);
    return cv3_->forward(concat_channels<T>({&a, &b}));
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = cv3_->backward(dy);
    Tensor<T> dx = cv1_->backward(m_.backward(slice_channels(g, 0, hidden_)));
    dx += cv2_->backward(slice_channels(g, hidden_, hidden_));
    return dx;
  }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_->collect_params(nn::join_path(p, "cv1"), out);
    cv2_->collect_params(nn::join_path(p, "cv2"), out);
    cv3_->collect_params(nn::join_path(p, "cv3"), out);
    m_.collect_params(nn::join_path(p, "m"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_->collect_buffers(nn::join_path(p, "cv1"), out);
    cv2_->collect_buffers(nn::join_path(p, "cv2"), out);
    cv3_->collect_buffers(nn::join_path(p, "cv3"), out);
    m_.collect_buffers(nn::join_path(p, "m"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    Shape a = m_.infer(cv1_->infer(in, f), f);
    cv2_->infer(in, f);
    a[1] *= 2;
    return cv3_->infer(a, f);
  }
  std::string type_name() const override { return "RepNCSP"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    cv1_->set_mode(m);
    cv2_->set_mode(m);
    cv3_->set_mode(m);
    m_.set_mode(m);
  }

 private:
  int hidden_;
  ModulePtr<T> cv1_, cv2_, cv3_;
  nn::Sequential<T> m_;
};

// Embedded transformer stage of the RepViT aggregation module.
struct EmbeddedViT {
  int input_h = 1;
  int input_w = 1;
  int patch_size = 1;
  int embed_dim = 16;
  int num_heads = 2;
  double mlp_ratio = 2.0;
  int depth = 1;
};

struct ElanBlockSpec {
  int in_channels = 1;
  int mid_channels = 2;     // width after cv1; split into two equal halves
  int branch_channels = 1;  // width of cv2 / cv3 outputs
  int out_channels = 1;
  bool use_se = false;
  int se_ratio = se::kDefaultReduction;
  int branch_depth = 0;  // 0: each branch is one 3x3 conv; n > 0: RepNCSP(n) then 3x3 conv
  std::optional<EmbeddedViT> vit;  // replaces the cv3 branch's RepNCSP with a residual transformer stage

  int half() const { return mid_channels / 2; }
  int concat_channels() const { return mid_channels + 2 * branch_channels; }

  void validate() const {
    SODGELAN_REQUIRE(in_channels > 0 && mid_channels > 0 && branch_channels > 0 && out_channels > 0,
                     ConfigError, "ELAN block: non-positive width");
    SODGELAN_REQUIRE(mid_channels % 2 == 0, ConfigError, "ELAN block: mid_channels ", mid_channels,
                     " must be even to split into two halves");
    SODGELAN_REQUIRE(branch_depth >= 0, ConfigError, "ELAN block: negative branch depth");
    SODGELAN_REQUIRE(!vit || half() == branch_channels, ConfigError,
                     "ELAN block: embedded ViT stage needs mid/2 == branch width");
  }
};

// Split-transform-concat aggregation:
//   x' = cv1(x); [x0, x1] = split(x'); x0' = cv2(x0); x1' = cv3(x1);
//   y = cat(x0, x1, x0', x1'); (y = SE(y)); out = cv4(y)
// cv2 and cv3 act on the two halves in parallel.
template <class T>
class RepNCSPELAN4 : public Module<T> {
 public:
  RepNCSPELAN4(ElanBlockSpec spec, Rng& rng) : spec_(spec) {
    spec.validate();
    const int h = spec.half(), c4 = spec.branch_channels;
    cv1_ = make_conv<T>(spec.in_channels, spec.mid_channels, 1, 1, rng);
    if (spec.branch_depth > 0) cv2_.add("0", std::make_unique<RepNCSP<T>>(h, c4, spec.branch_depth, rng));
    cv2_.add(spec.branch_depth > 0 ? "1" : "0", make_conv<T>(spec.branch_depth > 0 ? c4 : h, c4, 3, 1, rng));
    if (spec.vit) {
      const auto& v = *spec.vit;
      ViTSpec vs{h, h, v.input_h, v.input_w, v.patch_size, v.embed_dim, v.depth, v.num_heads, v.mlp_ratio,
                 Unpatch::Full, true};
      cv3_.add("vit", std::make_unique<ViTEncoder<T>>(vs, rng));
      cv3_.add("0", make_conv<T>(h, c4, 3, 1, rng));
    } else {
      if (spec.branch_depth > 0) cv3_.add("0", std::make_unique<RepNCSP<T>>(h, c4, spec.branch_depth, rng));
      cv3_.add(spec.branch_depth > 0 ? "1" : "0", make_conv<T>(spec.branch_depth > 0 ? c4 : h, c4, 3, 1, rng));
    }
    if (spec.use_se) se_ = std::make_unique<se::SqueezeExcite<T>>(spec.concat_channels(), spec.se_ratio, rng);
    cv4_ = make_conv<T>(spec.concat_channels(), spec.out_channels, 1, 1, rng);
  }

  const ElanBlockSpec& spec() const { return spec_; }
  se::SqueezeExcite<T>* se() { return se_.get(); }
  ViTEncoder<T>* vit() { return spec_.vit ? &static_cast<ViTEncoder<T>&>(cv3_.at(0)) : nullptr; }
  nn::Sequential<T>& cv2() { return cv2_; }
  nn::Sequential<T>& cv3() { return cv3_; }
  Module<T>& cv1() { return *cv1_; }
  Module<T>& cv4() { return *cv4_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    const int h = spec_.half();
    Tensor<T> xp = cv1_->forward(x);
    this->record("cv1");
    Tensor<T> x0 = slice_channels(xp, 0, h);
    Tensor<T> x1 = slice_channels(xp, h, h);
    this->record("split");
    Tensor<T> x0p = cv2_.forward(x0);
    this->record("cv2");
    Tensor<T> x1p = cv3_.forward(x1);
    this->record("cv3");
    Tensor<T> y = concat_channels<T>({&x0, &x1, &x0p, &x1p});
    this->record("concat");
    if (se_) y = se_->forward(y);  // records "se"
    Tensor<T> out = cv4_->forward(y);
    this->record("cv4");
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int h = spec_.half(), c4 = spec_.branch_channels;
    Tensor<T> g = cv4_->backward(dy);
    if (se_) g = se_->backward(g);
    Tensor<T> dx0 = slice_channels(g, 0, h);
    Tensor<T> dx1 = slice_channels(g, h, h);
    dx0 += cv2_.backward(slice_channels(g, 2 * h, c4));
    dx1 += cv3_.backward(slice_channels(g, 2 * h + c4, c4));
    return cv1_->backward(concat_channels<T>({&dx0, &dx1}));
  }

  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_->collect_params(nn::join_path(p, "cv1"), out);
    cv2_.collect_params(nn::join_path(p, "cv2"), out);
    cv3_.collect_params(nn::join_path(p, "cv3"), out);
    if (se_) se_->collect_params(nn::join_path(p, "se"), out);
    cv4_->collect_params(nn::join_path(p, "cv4"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_->collect_buffers(nn::join_path(p, "cv1"), out);
    cv2_.collect_buffers(nn::join_path(p, "cv2"), out);
    cv3_.collect_buffers(nn::join_path(p, "cv3"), out);
    cv4_->collect_buffers(nn::join_path(p, "cv4"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    SODGELAN_REQUIRE(in.size() == 4 && in[1] == spec_.in_channels, ShapeMismatch, "ELAN block expects ",
                     spec_.in_channels, " channels, got ", detail::shape_str(in));
    Shape xp = cv1_->infer(in, f);
    Shape half = xp;
    half[1] = spec_.half();
    cv2_.infer(half, f);
    cv3_.infer(half, f);
    Shape y = xp;
    y[1] = spec_.concat_channels();
    if (se_) se_->infer(y, f);
    return cv4_->infer(y, f);
  }
  std::string type_name() const override {
    std::string n = "RepNCSPELAN4";
    if (spec_.vit) n += "_ViT";
    if (spec_.use_se) n += "_SE";
    return n;
  }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    cv1_->set_mode(m);
    cv2_.set_mode(m);
    cv3_.set_mode(m);
    if (se_) se_->set_mode(m);
    cv4_->set_mode(m);
  }
  void set_trace(nn::Trace* t) override {
    Module<T>::set_trace(t);
    if (se_) se_->set_trace(t);
  }

 private:
  ElanBlockSpec spec_;
  ModulePtr<T> cv1_, cv4_;
  nn::Sequential<T> cv2_, cv3_;
  std::unique_ptr<se::SqueezeExcite<T>> se_;
};

// ELAN-1 (first backbone stage): the second conv consumes the first conv's output.
template <class T>
class ELAN1 : public Module<T> {
 public:
  ELAN1(int c1, int c2, int c3, int c4, Rng& rng) : c3_(c3), c4_(c4) {
    cv1_ = make_conv<T>(c1, c3, 1, 1, rng);
    cv2_ = make_conv<T>(c3 / 2, c4, 3, 1, rng);
    cv3_ = make_conv<T>(c4, c4, 3, 1, rng);
    cv4_ = make_conv<T>(c3 + 2 * c4, c2, 1, 1, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> xp = cv1_->forward(x);
    Tensor<T> a = slice_channels(xp, 0, c3_ / 2);
    Tensor<T> b = slice_channels(xp, c3_ / 2, c3_ / 2);
    Tensor<T> c = cv2_->forward(b);
    Tensor<T> d = cv3_->forward(c);
    return cv4_->forward(concat_channels<T>({&a, &b, &c, &d}));
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const int h = c3_ / 2;
    Tensor<T> g = cv4_->backward(dy);
    Tensor<T> dc = slice_channels(g, 2 * h, c4_);
    dc += cv3_->backward(slice_channels(g, 2 * h + c4_, c4_));
    Tensor<T> db = slice_channels(g, h, h);
    db += cv2_->backward(dc);
    Tensor<T> da = slice_channels(g, 0, h);
    return cv1_->backward(concat_channels<T>({&da, &db}));
  }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_->collect_params(nn::join_path(p, "cv1"), out);
    cv2_->collect_params(nn::join_path(p, "cv2"), out);
    cv3_->collect_params(nn::join_path(p, "cv3"), out);
    cv4_->collect_params(nn::join_path(p, "cv4"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_->collect_buffers(nn::join_path(p, "cv1"), out);
    cv2_->collect_buffers(nn::join_path(p, "cv2"), out);
    cv3_->collect_buffers(nn::join_path(p, "cv3"), out);
    cv4_->collect_buffers(nn::join_path(p, "cv4"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    Shape xp = cv1_->infer(in, f);
    Shape h = xp;
    h[1] = c3_ / 2;
    cv3_->infer(cv2_->infer(h, f), f);
    xp[1] = c3_ + 2 * c4_;
    return cv4_->infer(xp, f);
  }
  std::string type_name() const override { return "ELAN1"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    cv1_->set_mode(m);
    cv2_->set_mode(m);
    cv3_->set_mode(m);
    cv4_->set_mode(m);
  }

 private:
  int c3_, c4_;
  ModulePtr<T> cv1_, cv2_, cv3_, cv4_;
};

// Downsample: 2x2 average pool (stride 1) then 3x3 stride-2 conv.
template <class T>
class AConv : public Module<T> {
 public:
  AConv(int c1, int c2, Rng& rng) : cv1_(conv_spec(c1, c2, 3, 2), rng) {}
  Tensor<T> forward(const Tensor<T>& x) override { return cv1_.forward(pool_.forward(x)); }
  Tensor<T> backward(const Tensor<T>& dy) override { return pool_.backward(cv1_.backward(dy)); }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_.collect_params(nn::join_path(p, "cv1"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_.collect_buffers(nn::join_path(p, "cv1"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override { return cv1_.infer(pool_.infer(in, f), f); }
  std::string type_name() const override { return "AConv"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    pool_.set_mode(m);
    cv1_.set_mode(m);
  }

 private:
  nn::AvgPool2x2<T> pool_;
  ConvBlock<T> cv1_;
};

// Spatial pyramid pooling aggregation: cv5(cat(y, mp(y), mp(mp(y)), mp(mp(mp(y))))), y = cv1(x).
template <class T>
class SPPELAN : public Module<T> {
 public:
  SPPELAN(int c1, int c2, int c3, Rng& rng)
      : c3_(c3), cv1_(conv_spec(c1, c3, 1), rng), cv5_(conv_spec(4 * c3, c2, 1), rng), pools_{nn::MaxPoolSame<T>(5), nn::MaxPoolSame<T>(5), nn::MaxPoolSame<T>(5)} {}

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y0 = cv1_.forward(x);
    Tensor<T> y1 = pools_[0].forward(y0);
    Tensor<T> y2 = pools_[1].forward(y1);
    Tensor<T> y3 = pools_[2].forward(y2);
    return cv5_.forward(concat_channels<T>({&y0, &y1, &y2, &y3}));
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = cv5_.backward(dy);
    Tensor<T> d3 = slice_channels(g, 3 * c3_, c3_);
    Tensor<T> d2 = slice_channels(g, 2 * c3_, c3_);
    d2 += pools_[2].backward(d3);
    Tensor<T> d1 = slice_channels(g, c3_, c3_);
    d1 += pools_[1].backward(d2);
    Tensor<T> d0 = slice_channels(g, 0, c3_);
    d0 += pools_[0].backward(d1);
    return cv1_.backward(d0);
  }
  void collect_params(const std::string& p, nn::ParamList<T>& out) override {
    cv1_.collect_params(nn::join_path(p, "cv1"), out);
    cv5_.collect_params(nn::join_path(p, "cv5"), out);
  }
  void collect_buffers(const std::string& p, nn::BufferList<T>& out) override {
    cv1_.collect_buffers(nn::join_path(p, "cv1"), out);
    cv5_.collect_buffers(nn::join_path(p, "cv5"), out);
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    Shape y = cv1_.infer(in, f);
    y[1] = 4 * c3_;
    return cv5_.infer(y, f);
  }
  std::string type_name() const override { return "SPPELAN"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    cv1_.set_mode(m);
    cv5_.set_mode(m);
    for (auto& p : pools_) p.set_mode(m);
  }

 private:
  int c3_;
  ConvBlock<T> cv1_, cv5_;
  nn::MaxPoolSame<T> pools_[3];
};

}  // namespace sodgelan::blocks
