#pragma once

#include <string>
#include <vector>

#include "hsnn/graph.hpp"

namespace hsnn {

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> out = x.value().reshaped(std::move(s));
  const std::size_t xid = x.id();
  return x.graph().record("reshape", {x}, std::move(out), [xid](Graph<T>& g, std::size_t, const Tensor<T>& go) {
    auto& gx = g.grad_slot(xid);
    for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
  });
}

template <class T>
Var<T> flatten(const Var<T>& x) {
  return reshape(x, Shape{1, x.numel()});
}

namespace detail {

// Views a shape as [outer, extent(axis), inner].
inline void split_axis(const Shape& s, std::size_t ax, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
}

}  // namespace detail

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no operands");
  const auto& first = xs.front().value();
  const std::size_t ax = first.normalize_axis(axis);
  Shape out_shape = first.shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& v : xs) {
    const auto& s = v.shape();
    bool ok = s.size() == first.rank();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == first.shape()[d];
    if (!ok)
      throw ShapeError("concat: shape " + to_string(s) + " incompatible with " + to_string(first.shape()) +
                       " along axis " + std::to_string(axis));
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  std::size_t outer, inner;
  detail::split_axis(out_shape, ax, outer, inner);
  const std::size_t total = out_shape[ax];
  Tensor<T> out(out_shape);
  std::size_t base = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value();
    const std::size_t e = extents[k];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data().begin() + o * e * inner, e * inner, out.data().begin() + (o * total + base) * inner);
    base += e;
  }
  std::vector<std::size_t> ids;
  for (const auto& v : xs) ids.push_back(v.id());
  return xs.front().graph().record(
      "concat", xs, std::move(out), [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
        std::size_t b = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t e = extents[k];
          if (g.requires_grad(ids[k])) {
            auto& gx = g.grad_slot(ids[k]);
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < e * inner; ++i) gx[o * e * inner + i] += go[(o * total + b) * inner + i];
          }
          b += e;
        }
      });
}

/// Rows [begin, end) along `axis`.
template <class T>
Var<T> slice(const Var<T>& x, int axis, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  const std::size_t ax = xv.normalize_axis(axis);
  const std::size_t n = xv.shape()[ax];
  if (begin >= end || end > n)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for extent " + std::to_string(n));
  std::size_t outer, inner;
  detail::split_axis(xv.shape(), ax, outer, inner);
  Shape s = xv.shape();
  s[ax] = end - begin;
  const std::size_t e = end - begin;
  Tensor<T> out(s);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data().begin() + (o * n + begin) * inner, e * inner, out.data().begin() + o * e * inner);
  const std::size_t xid = x.id();
  return x.graph().record("slice", {x}, std::move(out), [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
    auto& gx = g.grad_slot(xid);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < e * inner; ++i) gx[(o * n + begin) * inner + i] += go[o * e * inner + i];
  });
}

/// Swaps the last two axes.
template <class T>
Var<T> transpose(const Var<T>& x) {
  const auto& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + to_string(xv.shape()));
  Shape s = xv.shape();
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  const std::size_t batch = xv.numel() / (r * c);
  Tensor<T> out(s);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
  const std::size_t xid = x.id();
  return x.graph().record("transpose", {x}, std::move(out), [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
    auto& gx = g.grad_slot(xid);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += go[b * r * c + j * r + i];
  });
}

}  // namespace hsnn
