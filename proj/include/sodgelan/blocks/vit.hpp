#pragma once

#include <string>

#include "sodgelan/nn/sequence.hpp"

namespace sodgelan::blocks {

enum class Unpatch {
  Token,  // one output pixel per patch: [N, out, H/p, W/p]
  Full,   // each token decodes its whole patch: [N, out, H, W]
};

struct ViTSpec {
  int in_channels = 1;
  int out_channels = 1;
  int input_h = 1;  // spatial size the positional table is built for
  int input_w = 1;
  int patch_size = 1;
  int embed_dim = 8;
  int depth = 1;
  int num_heads = 1;
  double mlp_ratio = 2.0;
  Unpatch unpatch = Unpatch::Full;
  bool residual = false;  // out = x + decoded tokens (requires out == in and Full unpatch)

  int grid_h() const { return input_h / patch_size; }
  int grid_w() const { return input_w / patch_size; }
  int tokens() const { return grid_h() * grid_w(); }
  int patch_features() const { return in_channels * patch_size * patch_size; }
  int decoded_features() const {
    return unpatch == Unpatch::Full ? out_channels * patch_size * patch_size : out_channels;
  }

  void validate() const {
    SODGELAN_REQUIRE(patch_size > 0 && embed_dim > 0 && depth >= 0 && num_heads > 0 && mlp_ratio > 0,
                     ConfigError, "ViT: non-positive spec field");
    SODGELAN_REQUIRE(embed_dim % num_heads == 0, ConfigError, "ViT: embed_dim ", embed_dim,
                     " not divisible by num_heads ", num_heads);
    SODGELAN_REQUIRE(input_h % patch_size == 0 && input_w % patch_size == 0, ConfigError, "ViT: input ",
                     input_h, "x", input_w, " not divisible by patch ", patch_size);
    SODGELAN_REQUIRE(!residual || (out_channels == in_channels && unpatch == Unpatch::Full), ConfigError,
                     "ViT: residual stage needs out == in channels and full unpatch");
  }

  // Scalar parameter count of the encoder built from this spec.
  std::size_t param_count() const {
    const std::size_t d = embed_dim;
    const std::size_t hidden = std::max<long>(1, std::lround(embed_dim * mlp_ratio));
    const std::size_t block = 2 * (2 * d)                 // two layer norms
                              + (d * 3 * d + 3 * d)       // qkv
                              + (d * d + d)               // out projection
                              + (d * hidden + hidden)     // fc1
                              + (hidden * d + d);         // fc2
    return (static_cast<std::size_t>(patch_features()) * d + d)  // patch embedding
           + static_cast<std::size_t>(tokens()) * d              // positional table
           + depth * block + 2 * d                               // blocks + final norm
           + (d * decoded_features() + decoded_features());      // unembedding
  }
};

// patchify -> linear embed + learned positions -> pre-norm transformer blocks -> norm
// -> linear unembed -> feature map.
template <class T>
class ViTEncoder : public nn::Module<T> {
 public:
  ViTEncoder(ViTSpec spec, Rng& rng) : spec_(spec), pos_({spec.tokens(), spec.embed_dim}) {
    spec.validate();
    embed_ = std::make_unique<nn::Linear<T>>(spec.patch_features(), spec.embed_dim, rng);
    for (int i = 0; i < spec.depth; ++i)
      blocks_.add("block" + std::to_string(i),
                  std::make_unique<nn::TransformerBlock<T>>(spec.embed_dim, spec.num_heads, spec.mlp_ratio, rng));
    norm_ = std::make_unique<nn::LayerNorm<T>>(spec.embed_dim);
    unembed_ = std::make_unique<nn::Linear<T>>(spec.embed_dim, spec.decoded_features(), rng);
    if (spec.residual) {
      unembed_->weight().value.fill(T(0));
      unembed_->bias().value.fill(T(0));
    }
  }

  const ViTSpec& spec() const { return spec_; }
  nn::Parameter<T>& positional() { return pos_; }
  nn::Linear<T>& unembed() { return *unembed_; }
  nn::TransformerBlock<T>& block(int i) { return static_cast<nn::TransformerBlock<T>&>(blocks_.at(i)); }

  Tensor<T> forward(const Tensor<T>& x) override {
    require_rank(x, 4, "ViT input");
    SODGELAN_REQUIRE(x.dim(1) == spec_.in_channels && x.dim(2) == spec_.input_h && x.dim(3) == spec_.input_w,
                     ShapeMismatch, "ViT built for [", spec_.in_channels, ",", spec_.input_h, ",", spec_.input_w,
                     "], got ", detail::shape_str(x.shape()));
    Tensor<T> tok = embed_->forward(patchify(x, spec_.in_channels));
    const int n = x.dim(0), l = spec_.tokens(), d = spec_.embed_dim;
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < static_cast<std::size_t>(l) * d; ++i)
        tok[static_cast<std::size_t>(b) * l * d + i] += pos_.value[i];
    Tensor<T> y = unembed_->forward(norm_->forward(blocks_.forward(tok)));
    Tensor<T> out = unpatchify(y, n);
    if (spec_.residual) out += x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = dy.dim(0), l = spec_.tokens(), d = spec_.embed_dim;
    Tensor<T> dtok = patchify(dy, spec_.out_channels, spec_.unpatch == Unpatch::Token);
    Tensor<T> g = blocks_.backward(norm_->backward(unembed_->backward(dtok)));
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < static_cast<std::size_t>(l) * d; ++i)
        pos_.grad[i] += g[static_cast<std::size_t>(b) * l * d + i];
    Tensor<T> dpatch = embed_->backward(g);
    Tensor<T> dx = unpatchify_input(dpatch, n);
    if (spec_.residual) dx += dy;
    return dx;
  }

  void collect_params(const std::string& prefix, nn::ParamList<T>& out) override {
    embed_->collect_params(nn::join_path(prefix, "patch_embed"), out);
    out.push_back({nn::join_path(prefix, "pos_embed"), &pos_});
    blocks_.collect_params(nn::join_path(prefix, "blocks"), out);
    norm_->collect_params(nn::join_path(prefix, "norm"), out);
    unembed_->collect_params(nn::join_path(prefix, "unembed"), out);
  }

  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    SODGELAN_REQUIRE(in.size() == 4 && in[1] == spec_.in_channels && in[2] == spec_.input_h &&
                         in[3] == spec_.input_w,
                     ShapeMismatch, "ViT shape ", detail::shape_str(in));
    const Shape tok{in[0], spec_.tokens(), spec_.embed_dim};
    embed_->infer({in[0], spec_.tokens(), spec_.patch_features()}, f);
    blocks_.infer(tok, f);
    unembed_->infer(tok, f);
    if (spec_.unpatch == Unpatch::Full) return {in[0], spec_.out_channels, in[2], in[3]};
    return {in[0], spec_.out_channels, spec_.grid_h(), spec_.grid_w()};
  }
  std::string type_name() const override { return "ViT"; }
  void set_mode(nn::Mode m) override {
    nn::Module<T>::set_mode(m);
    embed_->set_mode(m);
    blocks_.set_mode(m);
    norm_->set_mode(m);
    unembed_->set_mode(m);
  }

 private:
  // [N, C, H, W] -> [N, L, C*p*p]; with `token_grid` the map is already at patch resolution.
  Tensor<T> patchify(const Tensor<T>& x, int c, bool token_grid = false) const {
    const int n = x.dim(0), p = token_grid ? 1 : spec_.patch_size, gh = spec_.grid_h(), gw = spec_.grid_w();
    const int f = c * p * p;
    Tensor<T> t({n, gh * gw, f});
    for (int b = 0; b < n; ++b)
      for (int gi = 0; gi < gh; ++gi)
        for (int gj = 0; gj < gw; ++gj) {
          T* dst = t.data() + (static_cast<std::size_t>(b) * gh * gw + gi * gw + gj) * f;
          for (int ci = 0; ci < c; ++ci)
            for (int di = 0; di < p; ++di)
              for (int dj = 0; dj < p; ++dj) dst[(ci * p + di) * p + dj] = x.at(b, ci, gi * p + di, gj * p + dj);
        }
    return t;
  }

  // Inverse of patchify: [N, L, c*p*p] -> [N, c, gh*p, gw*p].
  Tensor<T> fold(const Tensor<T>& t, int n, int c, int p) const {
    const int gh = spec_.grid_h(), gw = spec_.grid_w(), f = c * p * p;
    Tensor<T> out({n, c, gh * p, gw * p});
    for (int b = 0; b < n; ++b)
      for (int gi = 0; gi < gh; ++gi)
        for (int gj = 0; gj < gw; ++gj) {
          const T* src = t.data() + (static_cast<std::size_t>(b) * gh * gw + gi * gw + gj) * f;
          for (int ci = 0; ci < c; ++ci)
            for (int di = 0; di < p; ++di)
              for (int dj = 0; dj < p; ++dj) out.at(b, ci, gi * p + di, gj * p + dj) = src[(ci * p + di) * p + dj];
        }
    return out;
  }

  Tensor<T> unpatchify(const Tensor<T>& y, int n) const {
    return fold(y, n, spec_.out_channels, spec_.unpatch == Unpatch::Full ? spec_.patch_size : 1);
  }
  Tensor<T> unpatchify_input(const Tensor<T>& t, int n) const {
    return fold(t, n, spec_.in_channels, spec_.patch_size);
  }

  ViTSpec spec_;
  std::unique_ptr<nn::Linear<T>> embed_;
  nn::Parameter<T> pos_;  // zero-initialized
  nn::Sequential<T> blocks_;
  std::unique_ptr<nn::LayerNorm<T>> norm_;
  std::unique_ptr<nn::Linear<T>> unembed_;
};

}  // namespace sodgelan::blocks
