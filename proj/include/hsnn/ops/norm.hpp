#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/ops/conv.hpp"
#include "hsnn/ops/shape_ops.hpp"

namespace hsnn {

inline constexpr double kNormEps = 1e-5;

/// Group normalization over [N, C, H, W] with per-channel affine gain/bias.
template <class T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gain, const Var<T>& bias,
                  T eps = static_cast<T>(kNormEps)) {
  const auto& xs = x.shape();
  detail::require_rank4(xs, "group_norm", "input");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (groups == 0 || C % groups != 0)
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " + std::to_string(groups) +
                     " groups");
  if (gain.numel() != C || bias.numel() != C)
    throw ShapeError("group_norm: gain/bias must have " + std::to_string(C) + " elements");
  const std::size_t cpg = C / groups, M = cpg * HW;
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> out(xs);
  std::vector<T> xhat(xv.numel()), inv_std(N * groups);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (n * C + gi * cpg) * HW;
      T mu{0};
      for (std::size_t i = 0; i < M; ++i) mu += xv[base + i];
      mu /= static_cast<T>(M);
      T var{0};
      for (std::size_t i = 0; i < M; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
      var /= static_cast<T>(M);
      const T is = T{1} / std::sqrt(var + eps);
      inv_std[n * groups + gi] = is;
      for (std::size_t i = 0; i < M; ++i) {
        const std::size_t c = gi * cpg + i / HW;
        xhat[base + i] = (xv[base + i] - mu) * is;
        out[base + i] = xhat[base + i] * gv[c] + bv[c];
      }
    }
  const std::size_t xid = x.id(), gid = gain.id(), bid = bias.id();
  return x.graph().record(
      "group_norm", {x, gain, bias}, std::move(out),
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, std::size_t, const Tensor<T>& go) {
        const auto& gv2 = g.value(gid);
        if (g.requires_grad(gid) || g.requires_grad(bid)) {
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              T dg{0}, db{0};
              for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = (n * C + c) * HW + i;
                dg += go[idx] * xhat[idx];
                db += go[idx];
              }
              if (g.requires_grad(gid)) g.grad_slot(gid)[c] += dg;
              if (g.requires_grad(bid)) g.grad_slot(bid)[c] += db;
            }
        }
        if (!g.requires_grad(xid)) return;
        auto& gx = g.grad_slot(xid);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t gi = 0; gi < groups; ++gi) {
            const std::size_t base = (n * C + gi * cpg) * HW;
            T s1{0}, s2{0};
            for (std::size_t i = 0; i < M; ++i) {
              const T dxh = go[base + i] * gv2[gi * cpg + i / HW];
              s1 += dxh;
              s2 += dxh * xhat[base + i];
            }
            const T is = inv_std[n * groups + gi];
            const T inv_m = T{1} / static_cast<T>(M);
            for (std::size_t i = 0; i < M; ++i) {
              const T dxh = go[base + i] * gv2[gi * cpg + i / HW];
              gx[base + i] += is * (dxh - inv_m * s1 - xhat[base + i] * inv_m * s2);
            }
          }
      });
}

/// Per-row normalization of tokens [L, D] over the feature axis.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias) {
  const auto& s = x.shape();
  if (s.size() != 2) throw ShapeError("layer_norm: expects [L, D], got " + to_string(s));
  return reshape(group_norm(reshape(x, {s[0], s[1], 1, 1}), 1, gain, bias), s);
}

/// Per-channel normalization of tokens [L, C] over the token axis, using the
/// statistics of the current forward pass.
template <class T>
Var<T> token_batch_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias) {
  const auto& s = x.shape();
  if (s.size() != 2) throw ShapeError("token_batch_norm: expects [L, C], got " + to_string(s));
  Var<T> cl = reshape(transpose(x), {1, s[1], s[0], 1});
  return transpose(reshape(group_norm(cl, s[1], gain, bias), {s[1], s[0]}));
}

}  // namespace hsnn
