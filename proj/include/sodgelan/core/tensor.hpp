#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "sodgelan/core/error.hpp"

namespace sodgelan {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

// Dense row-major tensor. Activations use NCHW; token sequences use [N, L, D].
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (int d : shape_)
      SODGELAN_REQUIRE(d >= 0, ShapeMismatch, "negative dimension in ", detail::shape_str(shape_));
  }
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    SODGELAN_REQUIRE(data_.size() == shape_numel(shape_), ShapeMismatch, "tensor of shape ",
                     detail::shape_str(shape_), " given ", data_.size(), " values");
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i < 0 ? rank() + i : i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessors
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  // CHW accessors for single feature maps
  T& at(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  const T& at(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    SODGELAN_REQUIRE(shape_numel(s) == data_.size(), ShapeMismatch, "cannot reshape ",
                     detail::shape_str(shape_), " to ", detail::shape_str(s));
    shape_ = std::move(s);
  }

  Tensor& operator+=(const Tensor& o) {
    SODGELAN_REQUIRE(o.size() == size(), ShapeMismatch, "add ", detail::shape_str(shape_), " vs ",
                     detail::shape_str(o.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

// A single activation map indexed [channel, row, col].
template <class T>
using FeatureMap = Tensor<T>;

template <class T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
  SODGELAN_REQUIRE(t.rank() == rank, ShapeMismatch, what, ": expected rank ", rank, ", got ",
                   detail::shape_str(t.shape()));
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  SODGELAN_REQUIRE(a.shape() == b.shape(), ShapeMismatch, "compare ", detail::shape_str(a.shape()),
                   " vs ", detail::shape_str(b.shape()));
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Concatenate NCHW tensors along channels.
template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  SODGELAN_REQUIRE(!parts.empty(), InvalidInput, "concat of zero tensors");
  const int n = parts[0]->dim(0), h = parts[0]->dim(2), w = parts[0]->dim(3);
  int c = 0;
  for (auto* p : parts) {
    SODGELAN_REQUIRE(p->rank() == 4 && p->dim(0) == n && p->dim(2) == h && p->dim(3) == w,
                     ShapeMismatch, "concat: ", detail::shape_str(p->shape()), " vs ",
                     detail::shape_str(parts[0]->shape()));
    c += p->dim(1);
  }
  Tensor<T> out({n, c, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    T* dst = out.data() + static_cast<std::size_t>(b) * c * plane;
    for (auto* p : parts) {
      const std::size_t len = static_cast<std::size_t>(p->dim(1)) * plane;
      std::copy_n(p->data() + b * len, len, dst);
      dst += len;
    }
  }
  return out;
}

// Extract channels [c0, c0 + count) of an NCHW tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  SODGELAN_REQUIRE(c0 >= 0 && count >= 0 && c0 + count <= c, ShapeMismatch, "slice [", c0, ",",
                   c0 + count, ") of ", c, " channels");
  Tensor<T> out({n, count, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int b = 0; b < n; ++b)
    std::copy_n(x.data() + (static_cast<std::size_t>(b) * c + c0) * plane, count * plane,
                out.data() + static_cast<std::size_t>(b) * count * plane);
  return out;
}

// dst[:, c0:c0+src.C] += src
template <class T>
void add_into_channels(Tensor<T>& dst, const Tensor<T>& src, int c0) {
  const int n = dst.dim(0), c = dst.dim(1), cs = src.dim(1);
  const std::size_t plane = static_cast<std::size_t>(dst.dim(2)) * dst.dim(3);
  for (int b = 0; b < n; ++b) {
    T* d = dst.data() + (static_cast<std::size_t>(b) * c + c0) * plane;
    const T* s = src.data() + static_cast<std::size_t>(b) * cs * plane;
    for (std::size_t i = 0; i < cs * plane; ++i) d[i] += s[i];
  }
}

}  // namespace sodgelan
