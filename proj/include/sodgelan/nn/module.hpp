#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sodgelan/core/rng.hpp"
#include "sodgelan/core/tensor.hpp"

namespace sodgelan::nn {

template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Shape s) : value(s), grad(s) {}
  std::size_t numel() const { return value.size(); }
  void zero_grad() { grad.fill(T(0)); }
};

// Registry entry: dotted path -> parameter. Built by walking the module tree.
template <class T>
struct NamedParam {
  std::string path;
  Parameter<T>* param;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

// Non-learned persistent state (normalization running statistics).
template <class T>
struct NamedBuffer {
  std::string path;
  Tensor<T>* buffer;
};

template <class T>
using BufferList = std::vector<NamedBuffer<T>>;

// Analytic cost accumulator: floating point ops (2 x multiply-accumulates).
struct FlopCounter {
  double flops = 0;
  void add_macs(double macs) { flops += 2.0 * macs; }
};

// Records the order in which named sub-operations execute during forward.
struct Trace {
  std::vector<std::string> ops;
  void record(std::string op) { ops.push_back(std::move(op)); }
};

inline std::string join_path(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

enum class Mode { Train, Eval };

// Layer with explicit backward. In Mode::Train, forward caches what backward needs and
// normalization layers use batch statistics; in Mode::Eval forward leaves the module
// untouched, so distinct inputs may be evaluated concurrently.
template <class T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(const std::string& prefix, ParamList<T>& out) = 0;
  virtual void collect_buffers(const std::string&, BufferList<T>&) {}
  // Output shape for an NCHW (or [N,L,D]) input shape; accumulates analytic cost.
  virtual Shape infer(const Shape& in, FlopCounter* flops) const = 0;
  virtual std::string type_name() const = 0;

  virtual void set_mode(Mode m) { mode_ = m; }
  Mode mode() const { return mode_; }
  virtual void set_trace(Trace* t) { trace_ = t; }

  std::size_t count_params() {
    ParamList<T> ps;
    collect_params("", ps);
    std::size_t n = 0;
    for (auto& p : ps) n += p.param->numel();
    return n;
  }

 protected:
  bool training() const { return mode_ == Mode::Train; }
  void record(const char* op) const {
    if (trace_) trace_->record(op);
  }

  Mode mode_ = Mode::Eval;
  Trace* trace_ = nullptr;
};

template <class T>
using ModulePtr = std::unique_ptr<Module<T>>;

// Runs sub-modules in order.
template <class T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;
  void add(std::string name, ModulePtr<T> m) { items_.emplace_back(std::move(name), std::move(m)); }
  std::size_t size() const { return items_.size(); }
  Module<T>& at(std::size_t i) { return *items_[i].second; }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = x;
    for (auto& [name, m] : items_) y = m->forward(y);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (auto it = items_.rbegin(); it != items_.rend(); ++it) g = it->second->backward(g);
    return g;
  }
  void collect_params(const std::string& prefix, ParamList<T>& out) override {
    for (auto& [name, m] : items_) m->collect_params(join_path(prefix, name), out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) override {
    for (auto& [name, m] : items_) m->collect_buffers(join_path(prefix, name), out);
  }
  Shape infer(const Shape& in, FlopCounter* f) const override {
    Shape s = in;
    for (auto& [name, m] : items_) s = m->infer(s, f);
    return s;
  }
  std::string type_name() const override { return "Sequential"; }
  void set_mode(Mode m) override {
    Module<T>::set_mode(m);
    for (auto& [name, mod] : items_) mod->set_mode(m);
  }
  void set_trace(Trace* t) override {
    Module<T>::set_trace(t);
    for (auto& [name, mod] : items_) mod->set_trace(t);
  }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> items_;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <class T>
void init_uniform_fan_in(Tensor<T>& w, int fan_in, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -b, b));
}

}  // namespace sodgelan::nn
