#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/ops/elementwise.hpp"
#include "hsnn/ops/shape_ops.hpp"

namespace hsnn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

// Broadcast bookkeeping for the leading (batch) axes of matmul operands.
struct BatchPlan {
  Shape out_batch;
  std::vector<std::size_t> a_index, b_index;  // per output batch element
};

inline BatchPlan plan_batches(const Shape& a, const Shape& b) {
  const Shape ab(a.begin(), a.end() - 2), bb(b.begin(), b.end() - 2);
  const std::size_t r = std::max(ab.size(), bb.size());
  BatchPlan plan;
  plan.out_batch.assign(r, 1);
  auto ext = [r](const Shape& s, std::size_t d) { return d + s.size() < r ? std::size_t{1} : s[d + s.size() - r]; };
  for (std::size_t d = 0; d < r; ++d) {
    const std::size_t ea = ext(ab, d), eb = ext(bb, d);
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("matmul: batch extents " + to_string(a) + " and " + to_string(b) + " do not broadcast");
    plan.out_batch[d] = std::max(ea, eb);
  }
  const std::size_t count = shape_numel(plan.out_batch);
  for (std::size_t flat = 0; flat < count; ++flat) {
    std::size_t rem = flat, ia = 0, ib = 0, sa = 1, sb = 1;
    for (std::size_t d = r; d-- > 0;) {
      const std::size_t i = rem % plan.out_batch[d];
      rem /= plan.out_batch[d];
      const std::size_t ea = ext(ab, d), eb = ext(bb, d);
      ia += (ea == 1 ? 0 : i) * sa;
      ib += (eb == 1 ? 0 : i) * sb;
      sa *= ea;
      sb *= eb;
    }
    plan.a_index.push_back(ia);
    plan.b_index.push_back(ib);
  }
  return plan;
}

}  // namespace detail

/// Batched matrix product over the last two axes; leading axes broadcast.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw ShapeError("matmul: operands need rank >= 2, got " + to_string(as) + " and " + to_string(bs));
  const std::size_t m = as[as.size() - 2], k = as.back(), k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) throw ShapeError("matmul: inner extents differ, " + to_string(as) + " x " + to_string(bs));
  auto plan = detail::plan_batches(as, bs);
  Shape out_shape = plan.out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
    ConstMatMap<T> A(av.data().data() + plan.a_index[i] * m * k, m, k);
    ConstMatMap<T> B(bv.data().data() + plan.b_index[i] * k * n, k, n);
    MatMap<T> C(out.data().data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record(
      "matmul", {a, b}, std::move(out), [=, plan = std::move(plan)](Graph<T>& g, std::size_t, const Tensor<T>& go) {
        const auto& A_all = g.value(aid);
        const auto& B_all = g.value(bid);
        const bool ga_on = g.requires_grad(aid), gb_on = g.requires_grad(bid);
        for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
          ConstMatMap<T> G(go.data().data() + i * m * n, m, n);
          if (ga_on) {
            ConstMatMap<T> B(B_all.data().data() + plan.b_index[i] * k * n, k, n);
            MatMap<T> GA(g.grad_slot(aid).data().data() + plan.a_index[i] * m * k, m, k);
            GA.noalias() += G * B.transpose();
          }
          if (gb_on) {
            ConstMatMap<T> A(A_all.data().data() + plan.a_index[i] * m * k, m, k);
            MatMap<T> GB(g.grad_slot(bid).data().data() + plan.b_index[i] * k * n, k, n);
            GB.noalias() += A.transpose() * G;
          }
        }
      });
}

/// x W^T + b for x [..., in], W [out, in], b [out] (b may be invalid for no bias).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = Var<T>()) {
  Var<T> y = matmul(x, transpose(weight));
  return bias.valid() ? add_bias(y, bias, -1) : y;
}

/// Numerically stable softmax along `axis` (max subtraction).
template <class T>
Var<T> softmax(const Var<T>& x, int axis = -1) {
  const auto& xv = x.value();
  const std::size_t ax = xv.normalize_axis(axis);
  std::size_t outer, inner;
  detail::split_axis(xv.shape(), ax, outer, inner);
  const std::size_t n = xv.shape()[ax];
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T z{0};
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  const std::size_t xid = x.id();
  return x.graph().record("softmax", {x}, std::move(out), [=](Graph<T>& g, std::size_t self, const Tensor<T>& go) {
    const auto& y = g.value(self);
    auto& gx = g.grad_slot(xid);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += go[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) gx[base + j * inner] += y[base + j * inner] * (go[base + j * inner] - dot);
      }
  });
}

}  // namespace hsnn
