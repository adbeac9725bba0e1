#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hsnn/graph.hpp"
#include "hsnn/ops/elementwise.hpp"

namespace hsnn {

enum class NeuronKind { IF, LIF, LIAF };

inline std::string to_string(NeuronKind k) {
  switch (k) {
    case NeuronKind::IF: return "if";
    case NeuronKind::LIF: return "lif";
    case NeuronKind::LIAF: return "liaf";
  }
  return "?";
}

inline NeuronKind parse_neuron_kind(const std::string& s) {
  if (s == "if" || s == "IF") return NeuronKind::IF;
  if (s == "lif" || s == "LIF") return NeuronKind::LIF;
  if (s == "liaf" || s == "LIAF") return NeuronKind::LIAF;
  throw std::invalid_argument("unknown neuron kind '" + s + "' (expected if, lif or liaf)");
}

struct NeuronConfig {
  NeuronKind kind = NeuronKind::LIF;
  double threshold = 1.0;
  double leak = 0.5;  // forced to 1 for IF
  double surrogate_width = 1.0;
  /// Replaces the Heaviside step with the integral of the surrogate window,
  /// clamp((u - theta + a) / 2a, 0, 1). Only for finite-difference checks.
  bool smooth_forward = false;

  static NeuronConfig of(NeuronKind k) {
    NeuronConfig c;
    c.kind = k;
    if (k == NeuronKind::IF) c.leak = 1.0;
    return c;
  }

  double effective_leak() const { return kind == NeuronKind::IF ? 1.0 : leak; }

  void validate() const {
    if (!(threshold > 0)) throw std::invalid_argument("neuron threshold must be > 0");
    if (!(leak > 0 && leak <= 1)) throw std::invalid_argument("neuron leak must lie in (0, 1]");
    if (!(surrogate_width > 0)) throw std::invalid_argument("surrogate width must be > 0");
  }
};

/// Rectangular surrogate for d(spike)/du: 1/(2a) on |u - theta| < a.
template <class T>
T surrogate_grad(T u_minus_theta, T a) {
  return std::abs(u_minus_theta) < a ? T{1} / (T{2} * a) : T{0};
}

template <class T>
Tensor<T> surrogate_grad(const Tensor<T>& u_minus_theta, T a) {
  Tensor<T> out(u_minus_theta.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = surrogate_grad(u_minus_theta[i], a);
  return out;
}

/// Spike generation s = [u >= theta] with the surrogate window as backward.
template <class T>
Var<T> spike(const Var<T>& u, const NeuronConfig& cfg) {
  const T theta = static_cast<T>(cfg.threshold), a = static_cast<T>(cfg.surrogate_width);
  if (cfg.smooth_forward)
    return detail::unary<T>(
        "spike_smooth", u,
        [=](T v) { return std::clamp((v - theta + a) / (T{2} * a), T{0}, T{1}); },
        [=](T v, T) { return surrogate_grad(v - theta, a); });
  return detail::unary<T>(
      "spike", u, [=](T v) { return v >= theta ? T{1} : T{0}; },
      [=](T v, T) { return surrogate_grad(v - theta, a); });
}

/// Membrane potential and previous spikes of one layer. Invalid handles
/// stand for all-zero state.
template <class T>
struct NeuronState {
  Var<T> u;
  Var<T> s_prev;

  bool empty() const { return !u.valid(); }
  void reset() { *this = NeuronState{}; }
};

template <class T>
struct NeuronStepResult {
  Var<T> output;     // spikes (IF, LIF) or relu(u) (LIAF)
  Var<T> spikes;
  Var<T> potential;  // u after integration, before the next step's reset
};

/// u' = leak * u + input - s_prev * theta; s = [u' >= theta]. Updates `state`.
template <class T>
NeuronStepResult<T> neuron_step(NeuronState<T>& state, const Var<T>& input, const NeuronConfig& cfg) {
  Var<T> u = input;
  if (!state.empty()) {
    detail::require_same(state.u.shape(), input.shape(), "neuron_step");
    u = add(add(scale(state.u, static_cast<T>(cfg.effective_leak())), input),
            scale(state.s_prev, static_cast<T>(-cfg.threshold)));
  }
  Var<T> s = spike(u, cfg);
  state.u = u;
  state.s_prev = s;
  return {cfg.kind == NeuronKind::LIAF ? relu(u) : s, s, u};
}

/// Number of entries equal to one (spikes are exactly binary in step mode).
template <class T>
std::size_t count_spikes(const Tensor<T>& s) {
  std::size_t n = 0;
  for (T v : s.data()) n += v == T{1};
  return n;
}

}  // namespace hsnn
