#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sodgelan/nn/module.hpp"

namespace sodgelan::eval {

enum class OptimizerKind { Sgd, AdamW };

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adamw"; }
inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adamw") return OptimizerKind::AdamW;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adamw)");
}

// `momentum` doubles as AdamW's beta1.
struct SgdConfig {
  double momentum = 0.937;
  double weight_decay = 5e-4;
  bool nesterov = true;
  OptimizerKind kind = OptimizerKind::Sgd;
  double beta2 = 0.999, eps = 1e-8;
};

template <class T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(double lr) = 0;
  virtual void set_momentum(double m) = 0;
  void zero_grad() {
    for (auto& p : params_) p.param->zero_grad();
  }

 protected:
  explicit Optimizer(nn::ParamList<T> params) : params_(std::move(params)) {}
  nn::ParamList<T> params_;
};

// SGD with momentum. Weight decay applies to conv/linear weights (rank >= 2) only, not to
// normalization scales or biases.
template <class T>
class Sgd : public Optimizer<T> {
 public:
  Sgd(nn::ParamList<T> params, SgdConfig cfg) : Optimizer<T>(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) velocity_.emplace_back(p.param->value.shape());
  }

  const SgdConfig& config() const { return cfg_; }
  void set_momentum(double m) override { cfg_.momentum = m; }

  void step(double lr) override {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k].param;
      auto& v = velocity_[k];
      const bool decay = p.value.rank() >= 2 && cfg_.weight_decay > 0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        double g = p.grad[i];
        if (decay) g += cfg_.weight_decay * p.value[i];
        const double vel = cfg_.momentum * v[i] + g;
        v[i] = static_cast<T>(vel);
        const double upd = cfg_.nesterov ? g + cfg_.momentum * vel : vel;
        p.value[i] = static_cast<T>(p.value[i] - lr * upd);
      }
    }
  }


 private:
  using Optimizer<T>::params_;
  SgdConfig cfg_;
  std::vector<Tensor<T>> velocity_;
};

// Adam with decoupled weight decay (same rank >= 2 rule as Sgd).
template <class T>
class AdamW : public Optimizer<T> {
 public:
  AdamW(nn::ParamList<T> params, SgdConfig cfg) : Optimizer<T>(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.emplace_back(p.param->value.shape(), 0.0);
      v_.emplace_back(p.param->value.shape(), 0.0);
    }
  }

  void set_momentum(double m) override { cfg_.momentum = m; }

  void step(double lr) override {
    const double b1 = cfg_.momentum, b2 = cfg_.beta2;
    // beta1 may change during warmup, so its correction uses the running product
    prod_b1_ *= b1;
    prod_b2_ *= b2;
    const double c1 = 1 - prod_b1_, c2 = 1 - prod_b2_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k].param;
      const bool decay = p.value.rank() >= 2 && cfg_.weight_decay > 0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        double& m = m_[k][i];
        double& v = v_[k][i];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double w = p.value[i];
        if (decay) w -= lr * cfg_.weight_decay * w;
        w -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
        p.value[i] = static_cast<T>(w);
      }
    }
  }

 private:
  using Optimizer<T>::params_;
  SgdConfig cfg_;
  std::vector<Tensor<double>> m_, v_;
  double prod_b1_ = 1, prod_b2_ = 1;
};

template <class T>
std::unique_ptr<Optimizer<T>> make_optimizer(nn::ParamList<T> params, const SgdConfig& cfg) {
  if (cfg.kind == OptimizerKind::AdamW) return std::make_unique<AdamW<T>>(std::move(params), cfg);
  return std::make_unique<Sgd<T>>(std::move(params), cfg);
}

// lr0 * (lrf + (1 - lrf) * (1 + cos(pi * progress)) / 2), progress in [0, 1].
inline double cosine_lr(double lr0, double lrf, double progress) {
  return lr0 * (lrf + (1 - lrf) * 0.5 * (1 + std::cos(std::numbers::pi * progress)));
}

}  // namespace sodgelan::eval
