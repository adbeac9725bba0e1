#pragma once

#include <cmath>
#include <string>

#include "hsnn/graph.hpp"

namespace hsnn {

namespace detail {

/// `dfdx(input, output)` gives the local derivative.
template <class T, class F, class D>
Var<T> unary(const char* name, const Var<T>& x, F f, D dfdx) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.graph().record(name, {x}, std::move(out),
                          [xid, dfdx](Graph<T>& g, std::size_t self, const Tensor<T>& go) {
                            const auto& in = g.value(xid);
                            const auto& y = g.value(self);
                            auto& gx = g.grad_slot(xid);
                            for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i] * dfdx(in[i], y[i]);
                          });
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <class T, class F, class DA, class DB>
Var<T> binary(const char* name, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  require_same(a.shape(), b.shape(), name);
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i], bv[i]);
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record(name, {a, b}, std::move(out),
                          [aid, bid, da, db](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                            const auto& x = g.value(aid);
                            const auto& z = g.value(bid);
                            if (g.requires_grad(aid)) {
                              auto& ga = g.grad_slot(aid);
                              for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * da(x[i], z[i]);
                            }
                            if (g.requires_grad(bid)) {
                              auto& gb = g.grad_slot(bid);
                              for (std::size_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * db(x[i], z[i]);
                            }
                          });
}

}  // namespace detail

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary<T>(
      "scale", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return detail::unary<T>(
      "add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T{1}; });
}

/// 1 - x, the complement used by gating.
template <class T>
Var<T> one_minus(const Var<T>& x) {
  return detail::unary<T>(
      "one_minus", x, [](T v) { return T{1} - v; }, [](T, T) { return T{-1}; });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

/// Elementwise (Hadamard) product.
template <class T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(
      "hadamard", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return hadamard(a, b); }

/// Adds a 1-D bias along `axis`, broadcasting over every other axis.
template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias, int axis) {
  const auto& xv = x.value();
  const std::size_t ax = xv.normalize_axis(axis);
  const std::size_t n = xv.shape()[ax];
  if (bias.value().rank() != 1 || bias.numel() != n)
    throw ShapeError("add_bias: bias shape " + to_string(bias.shape()) + " does not match axis extent " +
                     std::to_string(n) + " of " + to_string(xv.shape()));
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < xv.rank(); ++d) inner *= xv.shape()[d];
  const std::size_t outer = xv.numel() / (inner * n);
  const auto& bv = bias.value();
  Tensor<T> out = xv;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t i = 0; i < inner; ++i) out[(o * n + c) * inner + i] += bv[c];
  const std::size_t xid = x.id(), bid = bias.id();
  return x.graph().record("add_bias", {x, bias}, std::move(out),
                          [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                            if (g.requires_grad(xid)) g.grad_slot(xid) += go;
                            if (g.requires_grad(bid)) {
                              auto& gb = g.grad_slot(bid);
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t c = 0; c < n; ++c)
                                  for (std::size_t i = 0; i < inner; ++i) gb[c] += go[(o * n + c) * inner + i];
                            }
                          });
}

/// Sum of all elements, as a shape-[1] tensor.
template <class T>
Var<T> sum(const Var<T>& x) {
  const std::size_t xid = x.id();
  return x.graph().record("sum", {x}, Tensor<T>::scalar(x.value().sum()),
                          [xid](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                            for (auto& v : g.grad_slot(xid).data()) v += go[0];
                          });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

}  // namespace hsnn
