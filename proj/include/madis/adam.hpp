#pragma once

#include "madis/param_store.hpp"

#include <map>

namespace madis {

/// Adam over the trainable subset of a ParamStore. Moment buffers are keyed
/// by parameter name so they survive checkpointing.
template <typename T>
class Adam {
 public:
  struct Config {
    T lr = T(1e-4);
    T beta1 = T(0.5);
    T beta2 = T(0.999);
    T eps = T(1e-8);
  };

  Adam(ParamStore<T>& params, Config cfg) : params_(&params), cfg_(cfg) {
    params.for_each([this](const std::string& name, Var<T>& var, bool trainable) {
      if (!trainable) return;
      m_.emplace(name, Tensor<T>::zeros(var->value.shape()));
      v_.emplace(name, Tensor<T>::zeros(var->value.shape()));
    });
  }

  void step() {
    ++step_;
    T bc1 = T(1) - std::pow(cfg_.beta1, T(step_));
    T bc2 = T(1) - std::pow(cfg_.beta2, T(step_));
    params_->for_each([this, bc1, bc2](const std::string& name, Var<T>& var, bool trainable) {
      if (!trainable || !var->grad_ready) return;
      auto& m = m_.at(name).array();
      auto& v = v_.at(name).array();
      const auto& g = var->grad.array();
      m = cfg_.beta1 * m + (T(1) - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (T(1) - cfg_.beta2) * g * g;
      var->value.array() -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
    });
  }

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }
  std::map<std::string, Tensor<T>>& first_moments() { return m_; }
  std::map<std::string, Tensor<T>>& second_moments() { return v_; }

 private:
  ParamStore<T>* params_;
  Config cfg_;
  int64_t step_ = 0;
  std::map<std::string, Tensor<T>> m_;
  std::map<std::string, Tensor<T>> v_;
};

}  // namespace madis
