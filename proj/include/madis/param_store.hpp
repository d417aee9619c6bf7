#pragma once

#include "madis/autograd.hpp"

#include <map>
#include <string>

namespace madis {

/// Ordered (lexicographic) named-parameter store. Frozen entries still build
/// graphs and may carry gradients toward the input, but the optimizer never
/// touches them.
template <typename T>
class ParamStore {
 public:
  Var<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    detail_require(!entries_.count(name), "param already registered: " + name);
    auto v = make_var(std::move(value), trainable);
    auto [it, ok] = entries_.emplace(name, std::move(v));
    trainable_[name] = trainable;
    return it->second;
  }

  Var<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    detail_require(it != entries_.end(), "unknown param: " + name);
    return it->second;
  }

  const Var<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    detail_require(it != entries_.end(), "unknown param: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  bool trainable(const std::string& name) const { return trainable_.at(name); }
  size_t size() const { return entries_.size(); }

  template <typename F>
  void for_each(F&& f) {
    for (auto& [name, var] : entries_) f(name, var, trainable_.at(name));
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [name, var] : entries_) f(name, var, trainable_.at(name));
  }

  void zero_grads() {
    for (auto& [name, var] : entries_) zero_grad(var);
  }

  /// Rebuilds the store at another precision; used to grad-check the f32
  /// networks at f64.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, var] : entries_)
      out.add(name, var->value.template cast<U>(), trainable_.at(name));
    return out;
  }

 private:
  static void detail_require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
  }
  std::map<std::string, Var<T>> entries_;
  std::map<std::string, bool> trainable_;
};

}  // namespace madis
