#pragma once

#include <string>
#include <vector>

#include "sodgelan/nn/module.hpp"

namespace sodgelan::model {

// Acyclic single-input layer graph. Node i reads the outputs of nodes `from` (index -1 is the
// graph input); a node without a module concatenates its inputs along channels.
template <class T>
class LayerGraph {
 public:
  struct Node {
    std::string name;
    std::vector<int> from;
    nn::ModulePtr<T> module;  // null: channel concat
  };

  int add(std::string name, int from, nn::ModulePtr<T> m) {
    check_from(from);
    nodes_.push_back({std::move(name), {from}, std::move(m)});
    return size() - 1;
  }
  int add_concat(std::string name, std::vector<int> from) {
    SODGELAN_REQUIRE(from.size() >= 2, ConfigError, "concat node needs at least two inputs");
    for (int f : from) check_from(f);
    nodes_.push_back({std::move(name), std::move(from), nullptr});
    return size() - 1;
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  Node& node(int i) { return nodes_[i]; }

  // Runs every node; returns all node outputs (callers pick the ones they need).
  const std::vector<Tensor<T>>& forward(const Tensor<T>& x) {
    outs_.assign(nodes_.size(), Tensor<T>());
    for (int i = 0; i < size(); ++i) {
      auto& n = nodes_[i];
      if (n.module) {
        outs_[i] = n.module->forward(input(n.from[0], x));
      } else {
        std::vector<const Tensor<T>*> parts;
        for (int f : n.from) parts.push_back(&input(f, x));
        outs_[i] = concat_channels(parts);
      }
    }
    return outs_;
  }

  // Gradients w.r.t. selected node outputs -> gradient w.r.t. the graph input.
  // Requires the preceding forward to have run in training mode.
  Tensor<T> backward(const std::vector<std::pair<int, Tensor<T>>>& seeds) {
    std::vector<Tensor<T>> grads(nodes_.size());
    Tensor<T> dx;
    auto accumulate = [&](int idx, Tensor<T> g) {
      Tensor<T>& slot = idx < 0 ? dx : grads[idx];
      if (slot.empty())
        slot = std::move(g);
      else
        slot += g;
    };
    for (auto& [idx, g] : seeds) accumulate(idx, g);
    for (int i = size() - 1; i >= 0; --i) {
      if (grads[i].empty()) continue;
      auto& n = nodes_[i];
      if (n.module) {
        accumulate(n.from[0], n.module->backward(grads[i]));
      } else {
        int c0 = 0;
        for (int f : n.from) {
          const int c = (f < 0 ? input_channels_ : outs_[f].dim(1));
          accumulate(f, slice_channels(grads[i], c0, c));
          c0 += c;
        }
      }
      grads[i] = Tensor<T>();
    }
    return dx;
  }

  // Shape propagation with analytic cost.
  std::vector<Shape> infer(const Shape& in, nn::FlopCounter* f) const {
    std::vector<Shape> shapes(nodes_.size());
    auto shape_of = [&](int idx) -> const Shape& { return idx < 0 ? in : shapes[idx]; };
    for (int i = 0; i < size(); ++i) {
      auto& n = nodes_[i];
      if (n.module) {
        shapes[i] = n.module->infer(shape_of(n.from[0]), f);
      } else {
        Shape s = shape_of(n.from[0]);
        for (std::size_t k = 1; k < n.from.size(); ++k) {
          const Shape& o = shape_of(n.from[k]);
          SODGELAN_REQUIRE(o[0] == s[0] && o[2] == s[2] && o[3] == s[3], ShapeMismatch, "concat node ", n.name,
                           ": ", detail::shape_str(s), " vs ", detail::shape_str(o));
          s[1] += o[1];
        }
        shapes[i] = s;
      }
    }
    return shapes;
  }

  void collect_params(const std::string& prefix, nn::ParamList<T>& out) {
    for (auto& n : nodes_)
      if (n.module) n.module->collect_params(nn::join_path(prefix, n.name), out);
  }
  void collect_buffers(const std::string& prefix, nn::BufferList<T>& out) {
    for (auto& n : nodes_)
      if (n.module) n.module->collect_buffers(nn::join_path(prefix, n.name), out);
  }
  void set_mode(nn::Mode m) {
    for (auto& n : nodes_)
      if (n.module) n.module->set_mode(m);
  }
  void set_trace(nn::Trace* t) {
    for (auto& n : nodes_)
      if (n.module) n.module->set_trace(t);
  }
  void set_input_channels(int c) { input_channels_ = c; }
  void release() { outs_.clear(); }

 private:
  void check_from(int f) const {
    SODGELAN_REQUIRE(f >= -1 && f < size(), ConfigError, "graph edge from node ", f, " into node ", size(),
                     " breaks topological order");
  }
  const Tensor<T>& input(int idx, const Tensor<T>& x) const { return idx < 0 ? x : outs_[idx]; }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> outs_;
  int input_channels_ = 3;
};

}  // namespace sodgelan::model
