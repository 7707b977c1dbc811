#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sodgelan/nn/layers.hpp"

// Squeeze-and-Excitation channel recalibration.
//
// squeeze:     s_c = mean over (h, w) of x[c, h, w]
// excite:      z = sigmoid(W2 * relu(W1 * s + b1) + b2), every z_c in [0, 1]
// recalibrate: y[c, h, w] = z_c * x[c, h, w]
//
// sum_c z_c is the channel capacity after recalibration; without SE every channel
// carries weight one and the capacity is simply C.
namespace sodgelan::se {

using ChannelDescriptor = std::vector<double>;
using ScaleVector = std::vector<double>;

inline constexpr int kDefaultReduction = 16;

// ceil(C / r), at least one unit.
inline int hidden_width(int channels, int reduction) {
  SODGELAN_REQUIRE(channels > 0 && reduction > 0, ConfigError, "SE needs positive channels and ratio, got C=",
                   channels, " r=", reduction);
  return std::max(1, (channels + reduction - 1) / reduction);
}

// Scalar parameters an SE stage adds: two dense layers with biases.
inline std::size_t param_count(int channels, int reduction) {
  const std::size_t c = static_cast<std::size_t>(channels);
  const std::size_t h = static_cast<std::size_t>(hidden_width(channels, reduction));
  return 2 * c * h + h + c;
}

struct SEWeights {
  int channels = 0;
  int reduction = kDefaultReduction;
  std::vector<double> w1;  // [hidden x C], row-major
  std::vector<double> b1;  // [hidden]
  std::vector<double> w2;  // [C x hidden], row-major
  std::vector<double> b2;  // [C]

  int hidden() const { return hidden_width(channels, reduction); }

  static SEWeights zeros(int channels, int reduction = kDefaultReduction) {
    SEWeights w;
    w.channels = channels;
    w.reduction = reduction;
    const int h = w.hidden();
    w.w1.assign(static_cast<std::size_t>(h) * channels, 0.0);
    w.b1.assign(h, 0.0);
    w.w2.assign(static_cast<std::size_t>(channels) * h, 0.0);
    w.b2.assign(channels, 0.0);
    return w;
  }

  // Dense-layer default: uniform in +-1/sqrt(fan_in), zero biases.
  static SEWeights random(int channels, int reduction, Rng& rng) {
    SEWeights w = zeros(channels, reduction);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(channels));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(w.hidden()));
    for (auto& v : w.w1) v = uniform(rng, -b1, b1);
    for (auto& v : w.w2) v = uniform(rng, -b2, b2);
    return w;
  }

  void validate() const {
    const std::size_t h = static_cast<std::size_t>(hidden()), c = static_cast<std::size_t>(channels);
    SODGELAN_REQUIRE(w1.size() == h * c && b1.size() == h && w2.size() == c * h && b2.size() == c,
                     ShapeMismatch, "SE weights inconsistent with C=", channels, " hidden=", h);
  }
};

template <class T>
ChannelDescriptor squeeze(const FeatureMap<T>& fmap) {
  require_rank(fmap, 3, "squeeze");
  const int c = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2);
  SODGELAN_REQUIRE(c >= 1 && h >= 1 && w >= 1, InvalidInput, "squeeze over empty map ",
                   detail::shape_str(fmap.shape()));
  ChannelDescriptor s(c);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0;
    const T* p = fmap.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    s[ci] = acc / static_cast<double>(plane);
  }
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline ScaleVector excite(const ChannelDescriptor& desc, const SEWeights& weights) {
  weights.validate();
  SODGELAN_REQUIRE(static_cast<int>(desc.size()) == weights.channels, ShapeMismatch,
                   "excite: descriptor has ", desc.size(), " channels, weights expect ", weights.channels);
  const int c = weights.channels, h = weights.hidden();
  std::vector<double> hid(h);
  for (int j = 0; j < h; ++j) {
    double a = weights.b1[j];
    for (int i = 0; i < c; ++i) a += weights.w1[static_cast<std::size_t>(j) * c + i] * desc[i];
    hid[j] = a > 0 ? a : 0;
  }
  ScaleVector z(c);
  for (int i = 0; i < c; ++i) {
    double a = weights.b2[i];
    for (int j = 0; j < h; ++j) a += weights.w2[static_cast<std::size_t>(i) * h + j] * hid[j];
    z[i] = sigmoid(a);
  }
  return z;
}

template <class T>
FeatureMap<T> recalibrate(const FeatureMap<T>& fmap, const ScaleVector& scale) {
  require_rank(fmap, 3, "recalibrate");
  SODGELAN_REQUIRE(static_cast<int>(scale.size()) == fmap.dim(0), ShapeMismatch, "recalibrate: ",
                   scale.size(), " scales for ", fmap.dim(0), " channels");
  FeatureMap<T> out(fmap.shape());
  const std::size_t plane = static_cast<std::size_t>(fmap.dim(1)) * fmap.dim(2);
  for (int c = 0; c < fmap.dim(0); ++c) {
    const T z = static_cast<T>(scale[c]);
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = z * fmap[c * plane + i];
  }
  return out;
}

inline double effective_capacity(const ScaleVector& scale) {
  for (double z : scale)
    SODGELAN_REQUIRE(std::isfinite(z) && z >= 0.0 && z <= 1.0, InvalidInput, "scale factor ", z,
                     " outside [0,1]");
  return std::accumulate(scale.begin(), scale.end(), 0.0);
}

// Full squeeze -> excite -> recalibrate on one map.
template <class T>
FeatureMap<T> apply(const FeatureMap<T>& fmap, const SEWeights& weights) {
  return recalibrate(fmap, excite(squeeze(fmap), weights));
}

// Batched SE stage with trainable weights. Parameter paths: fc1.{weight,bias}, fc2.{weight,bias}.
template <class T>
class SqueezeExcite : public nn::Module<T> {
 public:
  SqueezeExcite(int channels, int reduction, Rng& rng)
      : c_(channels), r_(reduction), h_(hidden_width(channels, reduction)), w1_({h_, c_}), b1_({h_}),
        w2_({c_, h_}), b2_({c_}) {
    nn::init_uniform_fan_in(w1_.value, c_, rng);
    nn::init_uniform_fan_in(w2_.value, h_, rng);
  }

  int channels() const { return c_; }
  int reduction() const { return r_; }
  int hidden() const { return h_; }

  SEWeights weights() const {
    SEWeights w = SEWeights::zeros(c_, r_);
    std::copy(w1_.value.values().begin(), w1_.value.values().end(), w.w1.begin());
    std::copy(b1_.value.values().begin(), b1_.value.values().end(), w.b1.begin());
    std::copy(w2_.value.values().begin(), w2_.value.values().end(), w.w2.begin());
    std::copy(b2_.value.values().begin(), b2_.value.values().end(), w.b2.begin());
    return w;
  }
  void set_weights(const SEWeights& w) {
    w.validate();
    SODGELAN_REQUIRE(w.channels == c_ && w.hidden() == h_, ShapeMismatch, "SE weights for C=", w.channels,
                     " given to stage with C=", c_);
    for (std::size_t i = 0; i < w.w1.size(); ++i) w1_.value[i] = static_cast<T>(w.w1[i]);
    for (std::size_t i = 0; i < w.b1.size(); ++i) b1_.value[i] = static_cast<T>(w.b1[i]);
    for (std::size_t i = 0; i < w.w2.size(); ++i) w2_.value[i] = static_cast<T>(w.w2[i]);
    for (std::size_t i = 0; i < w.b2.size(); ++i) b2_.value[i] = static_cast<T>(w.b2[i]);
  }
  // Pins every gate at exactly 1 (open) or 0 by zeroing the dense weights and saturating b2.
  void force_gates(bool open) {
    w1_.value.fill(T(0));
    b1_.value.fill(T(0));
    w2_.value.fill(T(0));
    b2_.value.fill(open ? T(1000) : T(-1000));
  }
  // Gate values of the most recent training forward (or any forward once keep_scale is set), [N, C].
  const Tensor<T>& last_scale() const { return z_; }
  void keep_scale(bool on) { keep_scale_ = on; }

  Tensor<T> forward(const Tensor<T>& x) override {
    require_rank(x, 4, "SE input");
    SODGELAN_REQUIRE(x.dim(1) == c_, ShapeMismatch, "SE expects ", c_, " channels, got ", x.dim(1));
    const int n = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    SODGELAN_REQUIRE(plane > 0, InvalidInput, "SE over empty spatial dims");
    Tensor<T> s({n, c_}), a({n, h_}), z({n, c_});
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < c_; ++c) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * c_ + c) * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        s[static_cast<std::size_t>(b) * c_ + c] = acc / static_cast<T>(plane);
      }
      for (int j = 0; j < h_; ++j) {
        T acc = b1_.value[j];
        for (int c = 0; c < c_; ++c) acc += w1_.value[static_cast<std::size_t>(j) * c_ + c] * s[b * c_ + c];
        a[static_cast<std::size_t>(b) * h_ + j] = acc;
      }
      for (int c = 0; c < c_; ++c) {
        T acc = b2_.value[c];
        for (int j = 0; j < h_; ++j) {
          const T hv = a[b * h_ + j];
          acc += w2_.value[static_cast<std::size_t>(c) * h_ + j] * (hv > 0 ? hv : T(0));
        }
        z[static_cast<std::size_t>(b) * c_ + c] = nn::sigmoid(acc);
      }
    }
    this->record("se");
    Tensor<T> y(x.shape());
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < c_; ++c) {
        const T zc = z[static_cast<std::size_t>(b) * c_ + c];
        const std::size_t off = (static_cast<std::size_t>(b) * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) y[off + i] = zc * x[off + i];
      }
    if (this->training() || keep_scale_) z_ = z;
    if (this->training()) {
      input_ = x;
      s_ = std::move(s);
      a_ = std::move(a);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Tensor<T>& x = input_;
    const int n = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor<T> dx(x.shape());
    std::vector<T> dpre(c_), dhid(h_), ds(c_);
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < c_; ++c) {
        const std::size_t off = (static_cast<std::size_t>(b) * c_ + c) * plane;
        T dz = 0;
        for (std::size_t i = 0; i < plane; ++i) dz += dy[off + i] * x[off + i];
        const T zc = z_[static_cast<std::size_t>(b) * c_ + c];
        dpre[c] = dz * zc * (T(1) - zc);
        b2_.grad[c] += dpre[c];
      }
      std::fill(dhid.begin(), dhid.end(), T(0));
      for (int c = 0; c < c_; ++c)
        for (int j = 0; j < h_; ++j) {
          const T hv = a_[static_cast<std::size_t>(b) * h_ + j];
          const T relu = hv > 0 ? hv : T(0);
          w2_.grad[static_cast<std::size_t>(c) * h_ + j] += dpre[c] * relu;
          dhid[j] += w2_.value[static_cast<std::size_t>(c) * h_ + j] * dpre[c];
        }
      for (int j = 0; j < h_; ++j)
        if (a_[static_cast<std::size_t>(b) * h_ + j] <= 0) dhid[j] = 0;
      std::fill(ds.begin(), ds.end(), T(0));
      for (int j = 0; j < h_; ++j) {
        b1_.grad[j] += dhid[j];
        for (int c = 0; c < c_; ++c) {
          w1_.grad[static_cast<std::size_t>(j) * c_ + c] += dhid[j] * s_[static_cast<std::size_t>(b) * c_ + c];
          ds[c] += w1_.value[static_cast<std::size_t>(j) * c_ + c] * dhid[j];
        }
      }
      for (int c = 0; c < c_; ++c) {
        const std::size_t off = (static_cast<std::size_t>(b) * c_ + c) * plane;
        const T zc = z_[static_cast<std::size_t>(b) * c_ + c];
        const T dmean = ds[c] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) dx[off + i] = zc * dy[off + i] + dmean;
      }
    }
    input_ = Tensor<T>();
    return dx;
  }

  void collect_params(const std::string& prefix, nn::ParamList<T>& out) override {
    out.push_back({nn::join_path(prefix, "fc1.weight"), &w1_});
    out.push_back({nn::join_path(prefix, "fc1.bias"), &b1_});
    out.push_back({nn::join_path(prefix, "fc2.weight"), &w2_});
    out.push_back({nn::join_path(prefix, "fc2.bias"), &b2_});
  }
  Shape infer(const Shape& in, nn::FlopCounter* f) const override {
    if (f) f->add_macs(static_cast<double>(in[0]) * 2.0 * c_ * h_);
    return in;
  }
  std::string type_name() const override { return "SE"; }

 private:
  int c_, r_, h_;
  bool keep_scale_ = false;
  nn::Parameter<T> w1_, b1_, w2_, b2_;
  Tensor<T> input_, s_, a_, z_;
};

}  // namespace sodgelan::se
