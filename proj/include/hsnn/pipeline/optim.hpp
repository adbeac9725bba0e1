#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hsnn/module.hpp"

namespace hsnn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction; moments are kept per parameter in registration order.
template <class T>
class Adam {
 public:
  Adam(ParameterSet<T>& params, AdamOptions opt = {}) : params_(params.all()), opt_(opt) {
    if (!(opt_.lr > 0) || !(opt_.beta1 >= 0 && opt_.beta1 < 1) || !(opt_.beta2 >= 0 && opt_.beta2 < 1) ||
        !(opt_.eps > 0))
      throw std::invalid_argument("adam: lr, eps must be > 0 and betas in [0, 1)");
    for (auto* p : params_) {
      m_.emplace_back(p->value.numel(), 0.0);
      v_.emplace_back(p->value.numel(), 0.0);
    }
  }

  std::uint64_t steps() const { return t_; }

  /// Applies one update from the accumulated gradients (missing grads count as zero).
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (p->grad.empty()) continue;
      auto w = p->value.data();
      auto g = p->grad.data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m_[i][j] = opt_.beta1 * m_[i][j] + (1 - opt_.beta1) * gj;
        v_[i][j] = opt_.beta2 * v_[i][j] + (1 - opt_.beta2) * gj * gj;
        const double upd = opt_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opt_.eps);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - upd);
      }
    }
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace hsnn
