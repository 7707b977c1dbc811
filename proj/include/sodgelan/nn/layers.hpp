#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sodgelan/nn/module.hpp"

namespace sodgelan::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace kernels {

// col has shape [C*K*K, Ho*Wo]
template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  for (int ci = 0; ci < c; ++ci)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + (static_cast<std::size_t>(ci * k + kh) * k + kw) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          T* dst = row + static_cast<std::size_t>(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * h + ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  for (int ci = 0; ci < c; ++ci)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + (static_cast<std::size_t>(ci * k + kh) * k + kw) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + static_cast<std::size_t>(oh) * wo;
          T* dst = x + (static_cast<std::size_t>(ci) * h + ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace kernels

struct Conv2dSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int groups = 1;
  bool bias = false;
  int pad() const { return kernel / 2; }
};

// Plain 2-D convolution with "same"-style padding kernel/2.
template <class T>
class Conv2d : public Module<T> {
 public:
  Conv2d(Conv2dSpec spec, Rng& rng) : spec_(spec) {
    SODGELAN_REQUIRE(spec.in_channels > 0 && spec.out_channels > 0 && spec.kernel > 0 &&
                         spec.stride > 0 && spec.groups > 0,
                     ConfigError, "conv: non-positive spec field");
    SODGELAN_REQUIRE(spec.in_channels % spec.groups == 0 && spec.out_channels % spec.groups == 0,
                     ConfigError, "conv: channels ", spec.in_channels, "->", spec.out_channels,
                     " not divisible by groups ", spec.groups);
    weight_ = Parameter<T>({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel});
    const int fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
    init_uniform_fan_in(weight_.value, fan_in, rng);
    if (spec.bias) {
      bias_ = Parameter<T>({spec.out_channels});
      init_uniform_fan_in(bias_.value, fan_in, rng);
    }
  }

  const Conv2dSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    require_rank(x, 4, "conv input");
    SODGELAN_REQUIRE(x.dim(1) == spec_.in_channels, ShapeMismatch, "conv expects ",
                     spec_.in_channels, " input channels, got ", x.dim(1));
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int k = spec_.kernel, s = spec_.stride, p = spec_.pad(), g = spec_.groups;
    const int ho = conv_out_size(h, k, s, p), wo = conv_out_size(w, k, s, p);
    SODGELAN_REQUIRE(ho > 0 && wo > 0, ShapeMismatch, "conv: input ", h, "x", w, " too small");
    const int cin_g = spec_.in_channels / g, cout_g = spec_.out_channels / g;
    const int rows = cin_g * k * k, cols = ho * wo;
    Tensor<T> y({n, spec_.out_channels, ho, wo});
    const bool direct = (k == 1 && s == 1);
    // Products run on aligned scratch so a sample's result does not depend on its offset in
    // the batch (vectorized kernels otherwise peel a different number of leading elements).
    RowMat<T> col(rows, cols), out(cout_g, cols);
    for (int b = 0; b < n; ++b) {
      for (int gi = 0; gi < g; ++gi) {
        const T* xin = x.data() + (static_cast<std::size_t>(b) * spec_.in_channels + gi * cin_g) * h * w;
        if (direct)
          std::copy(xin, xin + static_cast<std::size_t>(rows) * cols, col.data());
        else
          kernels::im2col(xin, cin_g, h, w, k, s, p, ho, wo, col.data());
        CMapMat<T> wm(weight_.value.data() + static_cast<std::size_t>(gi) * cout_g * rows, cout_g, rows);
        out.noalias() = wm * col;
        std::copy(out.data(), out.data() + out.size(),
                  y.data() + (static_cast<std::size_t>(b) * spec_.out_channels + gi * cout_g) * cols);
      }
      if (spec_.bias)
        for (int c = 0; c < spec_.out_channels; ++c) {
          T* yc = y.data() + (static_cast<std::size_t>(b) * spec_.out_channels + c) * cols;
          const T bv = bias_.value[c];
          for (int i = 0; i < cols; ++i) yc[i] += bv;
        }
    }
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Tensor<T>& x = input_;
    SODGELAN_REQUIRE(!x.empty(), Error, "conv backward without a training forward");
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int k = spec_.kernel, s = spec_.stride, p = spec_.pad(), g = spec_.groups;
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int cin_g = spec_.in_channels / g, cout_g = spec_.out_channels / g;
    const int rows = cin_g * k * k, cols = ho * wo;
    Tensor<T> dx(x.shape());
    const bool direct = (k == 1 && s == 1);
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(rows) * cols);
    std::vector<T> dcol(direct ? 0 : static_cast<std::size_t>(rows) * cols);
    for (int b = 0; b < n; ++b) {
      for (int gi = 0; gi < g; ++gi) {
        const std::size_t xoff = (static_cast<std::size_t>(b) * spec_.in_channels + gi * cin_g) * h * w;
        const T* src = x.data() + xoff;
        if (!direct) {
          kernels::im2col(src, cin_g, h, w, k, s, p, ho, wo, col.data());
          src = col.data();
        }
        CMapMat<T> cm(src, rows, cols);
        CMapMat<T> dym(dy.data() + (static_cast<std::size_t>(b) * spec_.out_channels + gi * cout_g) * cols,
                       cout_g, cols);
        MapMat<T> dwm(weight_.grad.data() + static_cast<std::size_t>(gi) * cout_g * rows, cout_g, rows);
        dwm.noalias() += dym * cm.transpose();
        CMapMat<T> wm(weight_.value.data() + static_cast<std::size_t>(gi) * cout_g * rows, cout_g, rows);
        if (direct) {
          MapMat<T> dxm(dx.data() + xoff, rows, cols);
          dxm.noalias() = wm.transpose() * dym;
        } else {
          MapMat<T> dcm(dcol.data(), rows, cols);
          dcm.noalias() = wm.transpose() * dym;
          kernels::col2im(dcol.data(), cin_g, h, w, k, s, p, ho, wo, dx.data() + xoff);
        }
      }
      if (spec_.bias)
        for (int c = 0; c < spec_.out_channels; ++c) {
          const T* dyc = dy.data() + (static_cast<std::size_t>(b) * spec_.out_channels + c) * cols;
          T acc = 0;
          for (int i = 0; i < cols; ++i) acc += dyc[i];
          bias_.grad[c] += acc;
        }
    }
    input_ = Tensor<T>();
    return dx;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    out.push_back({join_path(prefix, "weight"), &weight_});
    if (spec_.bias) out.push_back({join_path(prefix, "bias"), &bias_});
  }

  Shape infer(const Shape& in, FlopCounter* f) const override {
    SODGELAN_REQUIRE(in.size() == 4 && in[1] == spec_.in_channels, ShapeMismatch, "conv expects ",
                     spec_.in_channels, " channels, got ", detail::shape_str(in));
    const int ho = conv_out_size(in[2], spec_.kernel, spec_.stride, spec_.pad());
    const int wo = conv_out_size(in[3], spec_.kernel, spec_.stride, spec_.pad());
    if (f)
      f->add_macs(static_cast<double>(in[0]) * spec_.out_channels * ho * wo *
                  (spec_.in_channels / spec_.groups) * spec_.kernel * spec_.kernel);
    return {in[0], spec_.out_channels, ho, wo};
  }
  std::string type_name() const override { return "Conv2d"; }

 private:
  Conv2dSpec spec_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

// Per-channel batch normalization over (N, H, W) with affine transform.
template <class T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-3, double momentum = 0.03)
      : channels_(channels), eps_(eps), momentum_(momentum), gamma_({channels}), beta_({channels}),
        running_mean_({channels}), running_var_({channels}, T(1)) {
    gamma_.value.fill(T(1));
  }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    require_rank(x, 4, "batchnorm input");
    SODGELAN_REQUIRE(x.dim(1) == channels_, ShapeMismatch, "batchnorm expects ", channels_,
                     " channels, got ", x.dim(1));
    const int n = x.dim(0), c = channels_;
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor<T> y(x.shape());
    if (!this->training()) {
      for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci) {
          const T inv = T(1) / std::sqrt(running_var_[ci] + static_cast<T>(eps_));
          const T scale = gamma_.value[ci] * inv;
          const T shift = beta_.value[ci] - running_mean_[ci] * scale;
          const T* xs = x.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
          T* ys = y.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
          for (std::size_t i = 0; i < plane; ++i) ys[i] = xs[i] * scale + shift;
        }
      return y;
    }
    const double m = static_cast<double>(n) * plane;
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(c, T(0));
    for (int ci = 0; ci < c; ++ci) {
      double sum = 0;
      for (int b = 0; b < n; ++b) {
        const T* xs = x.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += xs[i];
      }
      const double mean = sum / m;
      double sq = 0;
      for (int b = 0; b < n; ++b) {
        const T* xs = x.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (xs[i] - mean) * (xs[i] - mean);
      }
      const double var = sq / m;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      inv_std_[ci] = inv;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T xh = static_cast<T>((x[off + i] - mean)) * inv;
          xhat_[off + i] = xh;
          y[off + i] = xh * gamma_.value[ci] + beta_.value[ci];
        }
      }
      const double unbiased = m > 1 ? sq / (m - 1) : var;
      running_mean_[ci] = static_cast<T>((1 - momentum_) * running_mean_[ci] + momentum_ * mean);
      running_var_[ci] = static_cast<T>((1 - momentum_) * running_var_[ci] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    SODGELAN_REQUIRE(!xhat_.empty(), Error, "batchnorm backward without a training forward");
    const int n = dy.dim(0), c = channels_;
    const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
    const double m = static_cast<double>(n) * plane;
    Tensor<T> dx(dy.shape());
    for (int ci = 0; ci < c; ++ci) {
      double sdy = 0, sdyx = 0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sdy += dy[off + i];
          sdyx += dy[off + i] * xhat_[off + i];
        }
      }
      gamma_.grad[ci] += static_cast<T>(sdyx);
      beta_.grad[ci] += static_cast<T>(sdy);
      const T g = gamma_.value[ci], inv = inv_std_[ci];
      const T mdy = static_cast<T>(sdy / m), mdyx = static_cast<T>(sdyx / m);
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          dx[off + i] = g * inv * (dy[off + i] - mdy - xhat_[off + i] * mdyx);
      }
    }
    xhat_ = Tensor<T>();
    return dx;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    out.push_back({join_path(prefix, "weight"), &gamma_});
    out.push_back({join_path(prefix, "bias"), &beta_});
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) override {
    out.push_back({join_path(prefix, "running_mean"), &running_mean_});
    out.push_back({join_path(prefix, "running_var"), &running_var_});
  }
  Shape infer(const Shape& in, FlopCounter*) const override { return in; }
  std::string type_name() const override { return "BatchNorm2d"; }

 private:
  int channels_;
  double eps_, momentum_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

enum class Activation { SiLU, Identity };

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
class SiLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
    if (this->training()) input_ = x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T s = sigmoid(input_[i]);
      dx[i] = dy[i] * s * (T(1) + input_[i] * (T(1) - s));
    }
    input_ = Tensor<T>();
    return dx;
  }
  void collect_params(const std::string&, ParamList<T>&) override {}
  Shape infer(const Shape& in, FlopCounter*) const override { return in; }
  std::string type_name() const override { return "SiLU"; }

 private:
  Tensor<T> input_;
};

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int groups = 1;
  bool has_norm = true;
  Activation activation = Activation::SiLU;
};

// conv -> (batch norm) -> (SiLU). The convolution carries a bias only when no norm follows.
template <class T>
class ConvBlock : public Module<T> {
 public:
  ConvBlock(ConvSpec spec, Rng& rng) : spec_(spec) {
    SODGELAN_REQUIRE(spec.kernel % 2 == 1, ConfigError, "conv kernel must be odd, got ", spec.kernel);
    conv_ = std::make_unique<Conv2d<T>>(
        Conv2dSpec{spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.groups, !spec.has_norm},
        rng);
    if (spec.has_norm) bn_ = std::make_unique<BatchNorm2d<T>>(spec.out_channels);
    if (spec.activation == Activation::SiLU) act_ = std::make_unique<SiLU<T>>();
  }

  const ConvSpec& spec() const { return spec_; }
  Conv2d<T>& conv() { return *conv_; }
  BatchNorm2d<T>* norm() { return bn_.get(); }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = conv_->forward(x);
    if (bn_) y = bn_->forward(y);
    if (act_) y = act_->forward(y);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    if (act_) g = act_->backward(g);
    if (bn_) g = bn_->backward(g);
    return conv_->backward(g);
  }
  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    conv_->collect_params(join_path(prefix, "conv"), out);
    if (bn_) bn_->collect_params(join_path(prefix, "bn"), out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) override {
    if (bn_) bn_->collect_buffers(join_path(prefix, "bn"), out);
  }
  Shape infer(const Shape& in, FlopCounter* f) const override { return conv_->infer(in, f); }
  std::string type_name() const override { return "Conv"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    conv_->set_mode(m);
    if (bn_) bn_->set_mode(m);
    if (act_) act_->set_mode(m);
  }

 private:
  ConvSpec spec_;
  std::unique_ptr<Conv2d<T>> conv_;
  std::unique_ptr<BatchNorm2d<T>> bn_;
  std::unique_ptr<SiLU<T>> act_;
};

// Max pooling with "same" padding (stride 1), as used by spatial pyramid pooling.
template <class T>
class MaxPoolSame : public Module<T> {
 public:
  explicit MaxPoolSame(int kernel) : k_(kernel) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), p = k_ / 2;
    Tensor<T> y(x.shape());
    std::vector<int> arg(this->training() ? x.size() : 0);
    for (int pl = 0; pl < n * c; ++pl) {
      const T* xs = x.data() + static_cast<std::size_t>(pl) * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          T best = -std::numeric_limits<T>::infinity();
          int bi = 0;
          for (int di = std::max(0, i - p); di <= std::min(h - 1, i + p); ++di)
            for (int dj = std::max(0, j - p); dj <= std::min(w - 1, j + p); ++dj)
              if (xs[di * w + dj] > best) {
                best = xs[di * w + dj];
                bi = di * w + dj;
              }
          const std::size_t o = static_cast<std::size_t>(pl) * h * w + i * w + j;
          y[o] = best;
          if (!arg.empty()) arg[o] = bi;
        }
    }
    if (this->training()) {
      argmax_ = std::move(arg);
      shape_ = x.shape();
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(shape_);
    const std::size_t plane = static_cast<std::size_t>(shape_[2]) * shape_[3];
    for (std::size_t o = 0; o < dy.size(); ++o) dx[(o / plane) * plane + argmax_[o]] += dy[o];
    argmax_.clear();
    return dx;
  }
  void collect_params(const std::string&, ParamList<T>&) override {}
  Shape infer(const Shape& in, FlopCounter*) const override { return in; }
  std::string type_name() const override { return "MaxPool"; }

 private:
  int k_;
  std::vector<int> argmax_;
  Shape shape_;
};

// 2x2 average pooling with stride 1 and no padding (H, W shrink by one).
template <class T>
class AvgPool2x2 : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    SODGELAN_REQUIRE(h >= 2 && w >= 2, ShapeMismatch, "avgpool needs at least 2x2 input");
    Tensor<T> y({n, c, h - 1, w - 1});
    for (int pl = 0; pl < n * c; ++pl) {
      const T* xs = x.data() + static_cast<std::size_t>(pl) * h * w;
      T* ys = y.data() + static_cast<std::size_t>(pl) * (h - 1) * (w - 1);
      for (int i = 0; i < h - 1; ++i)
        for (int j = 0; j < w - 1; ++j)
          ys[i * (w - 1) + j] =
              T(0.25) * (xs[i * w + j] + xs[i * w + j + 1] + xs[(i + 1) * w + j] + xs[(i + 1) * w + j + 1]);
    }
    if (this->training()) shape_ = x.shape();
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(shape_);
    const int h = shape_[2], w = shape_[3];
    for (int pl = 0; pl < shape_[0] * shape_[1]; ++pl) {
      const T* g = dy.data() + static_cast<std::size_t>(pl) * (h - 1) * (w - 1);
      T* d = dx.data() + static_cast<std::size_t>(pl) * h * w;
      for (int i = 0; i < h - 1; ++i)
        for (int j = 0; j < w - 1; ++j) {
          const T v = T(0.25) * g[i * (w - 1) + j];
          d[i * w + j] += v;
          d[i * w + j + 1] += v;
          d[(i + 1) * w + j] += v;
          d[(i + 1) * w + j + 1] += v;
        }
    }
    return dx;
  }
  void collect_params(const std::string&, ParamList<T>&) override {}
  Shape infer(const Shape& in, FlopCounter*) const override { return {in[0], in[1], in[2] - 1, in[3] - 1}; }
  std::string type_name() const override { return "AvgPool"; }

 private:
  Shape shape_;
};

template <class T>
class UpsampleNearest : public Module<T> {
 public:
  explicit UpsampleNearest(int factor = 2) : f_(factor) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, h * f_, w * f_});
    for (int pl = 0; pl < n * c; ++pl) {
      const T* xs = x.data() + static_cast<std::size_t>(pl) * h * w;
      T* ys = y.data() + static_cast<std::size_t>(pl) * h * w * f_ * f_;
      for (int i = 0; i < h * f_; ++i)
        for (int j = 0; j < w * f_; ++j) ys[i * w * f_ + j] = xs[(i / f_) * w + j / f_];
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2) / f_, w = dy.dim(3) / f_;
    Tensor<T> dx({n, c, h, w});
    for (int pl = 0; pl < n * c; ++pl) {
      const T* g = dy.data() + static_cast<std::size_t>(pl) * h * w * f_ * f_;
      T* d = dx.data() + static_cast<std::size_t>(pl) * h * w;
      for (int i = 0; i < h * f_; ++i)
        for (int j = 0; j < w * f_; ++j) d[(i / f_) * w + j / f_] += g[i * w * f_ + j];
    }
    return dx;
  }
  void collect_params(const std::string&, ParamList<T>&) override {}
  Shape infer(const Shape& in, FlopCounter*) const override { return {in[0], in[1], in[2] * f_, in[3] * f_}; }
  std::string type_name() const override { return "Upsample"; }

 private:
  int f_;
};

}  // namespace sodgelan::nn
