#pragma once

#include <cmath>
#include <string>

#include "sodgelan/nn/layers.hpp"

// Token-sequence layers operating on [N, L, D] tensors.
namespace sodgelan::nn {

template <class T>
class Linear : public Module<T> {
 public:
  Linear(int in_features, int out_features, Rng& rng, bool bias = true)
      : in_(in_features), out_(out_features), has_bias_(bias), weight_({out_features, in_features}) {
    SODGELAN_REQUIRE(in_features > 0 && out_features > 0, ConfigError, "linear: non-positive width");
    init_uniform_fan_in(weight_.value, in_features, rng);
    if (bias) bias_ = Parameter<T>({out_features});
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    SODGELAN_REQUIRE(x.dim(-1) == in_, ShapeMismatch, "linear expects last dim ", in_, ", got ",
                     detail::shape_str(x.shape()));
    const int rows = static_cast<int>(x.size() / in_);
    Shape ys = x.shape();
    ys.back() = out_;
    Tensor<T> y(ys);
    // one product per sample keeps each sample's result independent of the batch size
    const int per = rows / x.dim(0);
    CMapMat<T> wm(weight_.value.data(), out_, in_);
    for (int n = 0; n < x.dim(0); ++n) {
      CMapMat<T> xm(x.data() + static_cast<std::size_t>(n) * per * in_, per, in_);
      MapMat<T> ym(y.data() + static_cast<std::size_t>(n) * per * out_, per, out_);
      ym.noalias() = xm * wm.transpose();
      if (has_bias_)
        for (int r = 0; r < per; ++r)
          for (int o = 0; o < out_; ++o) ym(r, o) += bias_.value[o];
    }
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int rows = static_cast<int>(input_.size() / in_);
    Tensor<T> dx(input_.shape());
    CMapMat<T> xm(input_.data(), rows, in_);
    CMapMat<T> dym(dy.data(), rows, out_);
    MapMat<T> dwm(weight_.grad.data(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    CMapMat<T> wm(weight_.value.data(), out_, in_);
    MapMat<T> dxm(dx.data(), rows, in_);
    dxm.noalias() = dym * wm;
    if (has_bias_)
      for (int r = 0; r < rows; ++r)
        for (int o = 0; o < out_; ++o) bias_.grad[o] += dym(r, o);
    input_ = Tensor<T>();
    return dx;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    out.push_back({join_path(prefix, "weight"), &weight_});
    if (has_bias_) out.push_back({join_path(prefix, "bias"), &bias_});
  }
  Shape infer(const Shape& in, FlopCounter* f) const override {
    Shape s = in;
    s.back() = out_;
    if (f) f->add_macs(static_cast<double>(shape_numel(in) / in_) * in_ * out_);
    return s;
  }
  std::string type_name() const override { return "Linear"; }

 private:
  int in_, out_;
  bool has_bias_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

template <class T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(int dim, double eps = 1e-5) : dim_(dim), eps_(eps), gamma_({dim}), beta_({dim}) {
    gamma_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    const int rows = static_cast<int>(x.size() / dim_);
    Tensor<T> y(x.shape());
    if (this->training()) {
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(rows, T(0));
    }
    for (int r = 0; r < rows; ++r) {
      const T* xs = x.data() + static_cast<std::size_t>(r) * dim_;
      double mean = 0, var = 0;
      for (int i = 0; i < dim_; ++i) mean += xs[i];
      mean /= dim_;
      for (int i = 0; i < dim_; ++i) var += (xs[i] - mean) * (xs[i] - mean);
      var /= dim_;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      for (int i = 0; i < dim_; ++i) {
        const T xh = static_cast<T>(xs[i] - mean) * inv;
        y[static_cast<std::size_t>(r) * dim_ + i] = xh * gamma_.value[i] + beta_.value[i];
        if (this->training()) xhat_[static_cast<std::size_t>(r) * dim_ + i] = xh;
      }
      if (this->training()) inv_std_[r] = inv;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int rows = static_cast<int>(dy.size() / dim_);
    Tensor<T> dx(dy.shape());
    std::vector<T> dxh(dim_);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * dim_;
      double s1 = 0, s2 = 0;
      for (int i = 0; i < dim_; ++i) {
        gamma_.grad[i] += dy[off + i] * xhat_[off + i];
        beta_.grad[i] += dy[off + i];
        dxh[i] = dy[off + i] * gamma_.value[i];
        s1 += dxh[i];
        s2 += dxh[i] * xhat_[off + i];
      }
      const T m1 = static_cast<T>(s1 / dim_), m2 = static_cast<T>(s2 / dim_);
      for (int i = 0; i < dim_; ++i) dx[off + i] = inv_std_[r] * (dxh[i] - m1 - xhat_[off + i] * m2);
    }
    xhat_ = Tensor<T>();
    return dx;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    out.push_back({join_path(prefix, "weight"), &gamma_});
    out.push_back({join_path(prefix, "bias"), &beta_});
  }
  Shape infer(const Shape& in, FlopCounter*) const override { return in; }
  std::string type_name() const override { return "LayerNorm"; }

 private:
  int dim_;
  double eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <class T>
class GELU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * T(0.7071067811865476)));
    if (this->training()) input_ = x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T x = input_[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
      const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
      dx[i] = dy[i] * (cdf + x * pdf);
    }
    input_ = Tensor<T>();
    return dx;
  }
  void collect_params(const std::string&, ParamList<T>&) override {}
  Shape infer(const Shape& in, FlopCounter*) const override { return in; }
  std::string type_name() const override { return "GELU"; }

 private:
  Tensor<T> input_;
};

// Multi-head self-attention with a fused qkv projection.
template <class T>
class MultiHeadSelfAttention : public Module<T> {
 public:
  MultiHeadSelfAttention(int dim, int heads, Rng& rng) : dim_(dim), heads_(heads) {
    SODGELAN_REQUIRE(heads > 0 && dim % heads == 0, ConfigError, "embed_dim ", dim,
                     " not divisible by num_heads ", heads);
    qkv_ = std::make_unique<Linear<T>>(dim, 3 * dim, rng);
    proj_ = std::make_unique<Linear<T>>(dim, dim, rng);
  }

  Linear<T>& qkv() { return *qkv_; }
  Linear<T>& proj() { return *proj_; }
  // Softmax weights of the most recent forward, [N, heads, L, L]; filled when keep_attention.
  const Tensor<T>& attention() const { return attn_; }
  void keep_attention(bool on) { keep_ = on; }

  Tensor<T> forward(const Tensor<T>& x) override {
    require_rank(x, 3, "attention input");
    const int n = x.dim(0), l = x.dim(1), dh = dim_ / heads_;
    Tensor<T> qkv = qkv_->forward(x);  // [N, L, 3D]
    Tensor<T> attn({n, heads_, l, l});
    Tensor<T> ctx({n, l, dim_});
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const int ld = 3 * dim_;
    RowMat<T> a(l, l);
    for (int b = 0; b < n; ++b)
      for (int hd = 0; hd < heads_; ++hd) {
        const T* base = qkv.data() + static_cast<std::size_t>(b) * l * ld;
        Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> q(base + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> k(base + dim_ + hd * dh, l, dh,
                                                                Eigen::OuterStride<>(ld));
        Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> v(base + 2 * dim_ + hd * dh, l, dh,
                                                                Eigen::OuterStride<>(ld));
        // aligned scratch: vectorized exp/sum would otherwise round differently per batch offset
        a.noalias() = (q * k.transpose()) * scale;
        for (int i = 0; i < l; ++i) {
          const T mx = a.row(i).maxCoeff();
          a.row(i) = (a.row(i).array() - mx).exp();
          a.row(i) /= a.row(i).sum();
        }
        std::copy(a.data(), a.data() + a.size(), attn.data() + (static_cast<std::size_t>(b) * heads_ + hd) * l * l);
        Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> c(ctx.data() + static_cast<std::size_t>(b) * l * dim_ + hd * dh,
                                                          l, dh, Eigen::OuterStride<>(dim_));
        c.noalias() = a * v;
      }
    Tensor<T> y = proj_->forward(ctx);
    if (this->training()) {
      qkv_cache_ = std::move(qkv);
      attn_ = attn;
    } else if (keep_) {
      attn_ = attn;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dctx = proj_->backward(dy);
    const int n = dctx.dim(0), l = dctx.dim(1), dh = dim_ / heads_, ld = 3 * dim_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Tensor<T> dqkv({n, l, ld});
    RowMat<T> da(l, l), ds(l, l);
    for (int b = 0; b < n; ++b)
      for (int hd = 0; hd < heads_; ++hd) {
        using SMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
        using SMapW = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
        const T* base = qkv_cache_.data() + static_cast<std::size_t>(b) * l * ld;
        T* dbase = dqkv.data() + static_cast<std::size_t>(b) * l * ld;
        SMap q(base + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        SMap k(base + dim_ + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        SMap v(base + 2 * dim_ + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        SMapW dq(dbase + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        SMapW dk(dbase + dim_ + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        SMapW dv(dbase + 2 * dim_ + hd * dh, l, dh, Eigen::OuterStride<>(ld));
        CMapMat<T> a(attn_.data() + (static_cast<std::size_t>(b) * heads_ + hd) * l * l, l, l);
        SMap dc(dctx.data() + static_cast<std::size_t>(b) * l * dim_ + hd * dh, l, dh, Eigen::OuterStride<>(dim_));
        dv.noalias() = a.transpose() * dc;
        da.noalias() = dc * v.transpose();
        for (int i = 0; i < l; ++i) {
          const T dot = (da.row(i).array() * a.row(i).array()).sum();
          ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
        }
        ds *= scale;
        dq.noalias() = ds * k;
        dk.noalias() = ds.transpose() * q;
      }
    qkv_cache_ = Tensor<T>();
    if (!keep_) attn_ = Tensor<T>();
    return qkv_->backward(dqkv);
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    qkv_->collect_params(join_path(prefix, "qkv"), out);
    proj_->collect_params(join_path(prefix, "proj"), out);
  }
  Shape infer(const Shape& in, FlopCounter* f) const override {
    qkv_->infer(in, f);
    if (f) f->add_macs(2.0 * in[0] * static_cast<double>(in[1]) * in[1] * dim_);  // QK^T and AV
    return proj_->infer(in, f);
  }
  std::string type_name() const override { return "MultiHeadSelfAttention"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    qkv_->set_mode(m);
    proj_->set_mode(m);
  }

 private:
  int dim_, heads_;
  bool keep_ = false;
  std::unique_ptr<Linear<T>> qkv_, proj_;
  Tensor<T> qkv_cache_, attn_;
};

// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)).
template <class T>
class TransformerBlock : public Module<T> {
 public:
  TransformerBlock(int dim, int heads, double mlp_ratio, Rng& rng) {
    const int hidden = std::max(1, static_cast<int>(std::lround(dim * mlp_ratio)));
    norm1_ = std::make_unique<LayerNorm<T>>(dim);
    attn_ = std::make_unique<MultiHeadSelfAttention<T>>(dim, heads, rng);
    norm2_ = std::make_unique<LayerNorm<T>>(dim);
    mlp_.add("fc1", std::make_unique<Linear<T>>(dim, hidden, rng));
    mlp_.add("act", std::make_unique<GELU<T>>());
    mlp_.add("fc2", std::make_unique<Linear<T>>(hidden, dim, rng));
  }

  MultiHeadSelfAttention<T>& attention() { return *attn_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    h += attn_->forward(norm1_->forward(x));
    Tensor<T> y = h;
    y += mlp_.forward(norm2_->forward(h));
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dh = dy;
    dh += norm2_->backward(mlp_.backward(dy));
    Tensor<T> dx = dh;
    dx += norm1_->backward(attn_->backward(dh));
    return dx;
  }
  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    norm1_->collect_params(join_path(prefix, "norm1"), out);
    attn_->collect_params(join_path(prefix, "attn"), out);
    norm2_->collect_params(join_path(prefix, "norm2"), out);
    mlp_.collect_params(join_path(prefix, "mlp"), out);
  }
  Shape infer(const Shape& in, FlopCounter* f) const override {
    attn_->infer(in, f);
    return mlp_.infer(in, f);
  }
  std::string type_name() const override { return "TransformerBlock"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    norm1_->set_mode(m);
    attn_->set_mode(m);
    norm2_->set_mode(m);
    mlp_.set_mode(m);
  }

 private:
  std::unique_ptr<LayerNorm<T>> norm1_, norm2_;
  std::unique_ptr<MultiHeadSelfAttention<T>> attn_;
  Sequential<T> mlp_;
};

}  // namespace sodgelan::nn
