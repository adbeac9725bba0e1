#pragma once

#include <string>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/ops/conv.hpp"

namespace hsnn {

/// Max pooling with floor semantics. Ties route the gradient to the first
/// maximal element in row-major scan order of the window.
template <class T>
Var<T> max_pool2d(const Var<T>& x, std::size_t k, std::size_t stride) {
  const auto& xs = x.shape();
  detail::require_rank4(xs, "max_pool2d", "input");
  if (k == 0 || stride == 0) throw ShapeError("max_pool2d: kernel and stride must be >= 1");
  if (k > xs[2] || k > xs[3])
    throw ShapeError("max_pool2d: kernel " + std::to_string(k) + " exceeds input extent " + to_string(xs));
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t oh = (H - k) / stride + 1, ow = (W - k) / stride + 1;
  Tensor<T> out({N, C, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  const auto& xv = x.value();
  for (std::size_t plane = 0; plane < N * C; ++plane)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = plane * H * W + (oy * stride) * W + ox * stride;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = plane * H * W + (oy * stride + ky) * W + ox * stride + kx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
  const std::size_t xid = x.id();
  return x.graph().record("max_pool2d", {x}, std::move(out),
                          [xid, argmax = std::move(argmax)](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                            auto& gx = g.grad_slot(xid);
                            for (std::size_t o = 0; o < go.numel(); ++o) gx[argmax[o]] += go[o];
                          });
}

/// Adaptive average pooling to a fixed output grid. Bin i along an axis of
/// extent n covers [floor(i*n/out), ceil((i+1)*n/out)).
template <class T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const auto& xs = x.shape();
  detail::require_rank4(xs, "adaptive_avg_pool2d", "input");
  if (out_h == 0 || out_w == 0) throw ShapeError("adaptive_avg_pool2d: output extents must be >= 1");
  const std::size_t NC = xs[0] * xs[1], H = xs[2], W = xs[3];
  auto bins = [](std::size_t n, std::size_t m) {
    std::vector<std::pair<std::size_t, std::size_t>> b(m);
    for (std::size_t i = 0; i < m; ++i) b[i] = {i * n / m, ((i + 1) * n + m - 1) / m};
    return b;
  };
  const auto by = bins(H, out_h), bx = bins(W, out_w);
  Tensor<T> out({xs[0], xs[1], out_h, out_w});
  const auto& xv = x.value();
  for (std::size_t p = 0; p < NC; ++p)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        T acc{0};
        for (std::size_t y = by[i].first; y < by[i].second; ++y)
          for (std::size_t z = bx[j].first; z < bx[j].second; ++z) acc += xv[(p * H + y) * W + z];
        const auto cnt = static_cast<T>((by[i].second - by[i].first) * (bx[j].second - bx[j].first));
        out[(p * out_h + i) * out_w + j] = acc / cnt;
      }
  const std::size_t xid = x.id();
  return x.graph().record("adaptive_avg_pool2d", {x}, std::move(out),
                          [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
                            auto& gx = g.grad_slot(xid);
                            for (std::size_t p = 0; p < NC; ++p)
                              for (std::size_t i = 0; i < out_h; ++i)
                                for (std::size_t j = 0; j < out_w; ++j) {
                                  const auto cnt = static_cast<T>((by[i].second - by[i].first) *
                                                                  (bx[j].second - bx[j].first));
                                  const T d = go[(p * out_h + i) * out_w + j] / cnt;
                                  for (std::size_t y = by[i].first; y < by[i].second; ++y)
                                    for (std::size_t z = bx[j].first; z < bx[j].second; ++z)
                                      gx[(p * H + y) * W + z] += d;
                                }
                          });
}

}  // namespace hsnn
