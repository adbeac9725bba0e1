#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/rng.hpp"

namespace hsnn {

/// Owns the trainable parameters of a model in registration order. Element
/// addresses are stable, so components keep raw references.
template <class T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<T>& add(std::string name, Tensor<T> value) {
    for (const auto& p : params_)
      if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    params_.push_back(Parameter<T>{std::move(name), std::move(value), {}});
    return params_.back();
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t size() const { return params_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
};

/// Uniform init with standard deviation gain / sqrt(fan_in).
template <class T>
Tensor<T> scaled_uniform(Rng& rng, Shape shape, std::size_t fan_in, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  return rng.uniform_tensor<T>(std::move(shape), -bound, bound);
}

}  // namespace hsnn
