#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "sodgelan/nn/module.hpp"

namespace testutil {

using sodgelan::Rng;
using sodgelan::Shape;
using sodgelan::Tensor;

template <class T>
Tensor<T> random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(sodgelan::uniform(rng, lo, hi));
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

struct GradReport {
  double worst = 0;
  std::string where;
  void note(double e, const std::string& w) {
    if (e > worst) {
      worst = e;
      where = w;
    }
  }
};

// Central-difference check of L = <w, m(x)> w.r.t. x and every parameter (up to
// `per_tensor` entries each). Module stays in whatever mode the caller set.
inline GradReport grad_check(sodgelan::nn::Module<double>& m, Tensor<double> x, Rng& rng,
                             int per_tensor = 12, double step = 1e-5) {
  Tensor<double> y = m.forward(x);
  Tensor<double> w = random_tensor<double>(y.shape(), rng);
  sodgelan::nn::ParamList<double> ps;
  m.collect_params("", ps);
  for (auto& p : ps) p.param->zero_grad();
  m.forward(x);
  Tensor<double> dx = m.backward(w);

  auto loss = [&]() { return dot(m.forward(x), w); };
  GradReport rep;
  auto probe = [&](double& v, double analytic, const std::string& where) {
    const double keep = v;
    v = keep + step;
    const double lp = loss();
    v = keep - step;
    const double lm = loss();
    v = keep;
    rep.note(rel_err((lp - lm) / (2 * step), analytic), where);
  };
  const int nx = static_cast<int>(x.size());
  for (int k = 0; k < std::min(per_tensor, nx); ++k) {
    const int i = static_cast<int>(sodgelan::uniform_int(rng, 0, nx - 1));
    probe(x[static_cast<std::size_t>(i)], dx[static_cast<std::size_t>(i)], "input[" + std::to_string(i) + "]");
  }
  for (auto& p : ps) {
    const int np = static_cast<int>(p.param->numel());
    for (int k = 0; k < std::min(per_tensor, np); ++k) {
      const int i = static_cast<int>(sodgelan::uniform_int(rng, 0, np - 1));
      probe(p.param->value[static_cast<std::size_t>(i)], p.param->grad[static_cast<std::size_t>(i)],
            p.path + "[" + std::to_string(i) + "]");
    }
  }
  return rep;
}

// Copies every parameter and buffer of `src` into the same registry path of `dst`.
// Returns how many dst parameters had no counterpart.
template <class T>
int copy_by_path(sodgelan::nn::Module<T>& src, sodgelan::nn::Module<T>& dst) {
  sodgelan::nn::ParamList<T> a, b;
  src.collect_params("", a);
  dst.collect_params("", b);
  int missing = 0;
  for (auto& q : b) {
    bool found = false;
    for (auto& p : a)
      if (p.path == q.path) {
        q.param->value = p.param->value;
        found = true;
      }
    missing += !found;
  }
  sodgelan::nn::BufferList<T> ba, bb;
  src.collect_buffers("", ba);
  dst.collect_buffers("", bb);
  for (auto& q : bb)
    for (auto& p : ba)
      if (p.path == q.path) *q.buffer = *p.buffer;
  return missing;
}

}  // namespace testutil
