#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hsnn/graph.hpp"

namespace hsnn {

inline constexpr double kProbClamp = 1e-7;

inline void require_one_hot(std::span<const double> y) {
  std::size_t hot = 0;
  for (double v : y) {
    if (v == 1.0)
      ++hot;
    else if (v != 0.0)
      throw std::invalid_argument("bce_loss: target is not one-hot (entry " + std::to_string(v) + ")");
  }
  if (hot != 1) throw std::invalid_argument("bce_loss: target is not one-hot (" + std::to_string(hot) + " hot entries)");
}

/// Binary cross-entropy averaged over classes:
/// mean_c -[y_c log p_c + (1 - y_c) log(1 - p_c)], with p clamped to [1e-7, 1 - 1e-7].
/// `scores` holds probabilities; `target` is a one-hot vector of the same length.
template <class T>
Var<T> bce_loss(const Var<T>& scores, const Tensor<T>& target) {
  if (scores.numel() != target.numel())
    throw ShapeError("bce_loss: " + std::to_string(scores.numel()) + " scores vs " + std::to_string(target.numel()) +
                     " targets");
  {
    std::vector<double> y(target.data().begin(), target.data().end());
    require_one_hot(y);
  }
  const T lo = static_cast<T>(kProbClamp), hi = T{1} - static_cast<T>(kProbClamp);
  const auto& p = scores.value();
  const std::size_t C = p.numel();
  T loss{0};
  for (std::size_t c = 0; c < C; ++c) {
    const T q = std::clamp(p[c], lo, hi);
    loss -= target[c] * std::log(q) + (T{1} - target[c]) * std::log(T{1} - q);
  }
  loss /= static_cast<T>(C);
  const std::size_t sid = scores.id();
  return scores.graph().record("bce_loss", {scores}, Tensor<T>::scalar(loss),
                               [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                                 const auto& pv = g.value(sid);
                                 auto& gs = g.grad_slot(sid);
                                 for (std::size_t c = 0; c < C; ++c) {
                                   const T q = pv[c];
                                   if (q < lo || q > hi) continue;
                                   const T d = -(target[c] / q - (T{1} - target[c]) / (T{1} - q));
                                   gs[c] += go[0] * d / static_cast<T>(C);
                                 }
                               });
}

}  // namespace hsnn
