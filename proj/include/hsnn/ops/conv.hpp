#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hsnn/graph.hpp"
#include "hsnn/ops/linalg.hpp"

namespace hsnn {

/// Per-side zero padding (or cropping, for transposed convolution).
struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;

  static Padding uniform(std::size_t p) { return {p, p, p, p}; }
  Padding operator+(const Padding& o) const {
    return {top + o.top, bottom + o.bottom, left + o.left, right + o.right};
  }
};

/// Sliding-window geometry of a convolution over one image of the batch.
struct ConvGeometry {
  std::size_t channels = 0, in_h = 0, in_w = 0;
  std::size_t k_h = 0, k_w = 0, stride = 1;
  Padding pad;
  std::size_t out_h = 0, out_w = 0;

  std::size_t col_rows() const { return channels * k_h * k_w; }
  std::size_t col_cols() const { return out_h * out_w; }

  static ConvGeometry make(std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                           std::size_t stride, Padding pad) {
    if (stride == 0) throw ShapeError("convolution stride must be >= 1");
    const std::size_t ph = h + pad.top + pad.bottom, pw = w + pad.left + pad.right;
    if (ph < kh || pw < kw)
      throw ShapeError("convolution kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " larger than padded input " + std::to_string(ph) + "x" + std::to_string(pw));
    return {c, h, w, kh, kw, stride, pad, (ph - kh) / stride + 1, (pw - kw) / stride + 1};
  }

  /// Input coordinate (possibly outside the image) read by output (oy, ox) at tap (ky, kx).
  long long src_y(std::size_t oy, std::size_t ky) const {
    return static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad.top);
  }
  long long src_x(std::size_t ox, std::size_t kx) const {
    return static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad.left);
  }
};

/// Unfolds one [C, H, W] image into a [C*kh*kw, out_h*out_w] column matrix.
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t ncol = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.k_h; ++ky)
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        T* row = cols + ((c * g.k_h + ky) * g.k_w + kx) * ncol;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long y = g.src_y(oy, ky);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long x = g.src_x(ox, kx);
            const bool in = y >= 0 && x >= 0 && y < static_cast<long long>(g.in_h) &&
                            x < static_cast<long long>(g.in_w);
            row[oy * g.out_w + ox] = in ? img[(c * g.in_h + y) * g.in_w + x] : T{0};
          }
        }
      }
}

/// Adjoint of im2col: scatters (adds) columns back into a [C, H, W] image.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t ncol = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.k_h; ++ky)
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        const T* row = cols + ((c * g.k_h + ky) * g.k_w + kx) * ncol;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long y = g.src_y(oy, ky);
          if (y < 0 || y >= static_cast<long long>(g.in_h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long x = g.src_x(ox, kx);
            if (x < 0 || x >= static_cast<long long>(g.in_w)) continue;
            img[(c * g.in_h + y) * g.in_w + x] += row[oy * g.out_w + ox];
          }
        }
      }
}

namespace detail {

inline void require_rank4(const Shape& s, const char* op, const char* what) {
  if (s.size() != 4)
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4, got " + to_string(s));
}

}  // namespace detail

/// 2-D cross-correlation: x [N,C,H,W], weight [C',C,kh,kw] -> [N,C',H',W'].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, std::size_t stride = 1, Padding pad = {}) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  detail::require_rank4(xs, "conv2d", "input");
  detail::require_rank4(ws, "conv2d", "weight");
  if (xs[1] != ws[1])
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels but weight " + to_string(ws) +
                     " expects " + std::to_string(ws[1]));
  const auto geo = ConvGeometry::make(xs[1], xs[2], xs[3], ws[2], ws[3], stride, pad);
  const std::size_t N = xs[0], Co = ws[0], K = geo.col_rows(), P = geo.col_cols();
  Tensor<T> out({N, Co, geo.out_h, geo.out_w});
  std::vector<T> cols(K * P);
  ConstMatMap<T> W(weight.value().data().data(), Co, K);
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.value().data().data() + n * geo.channels * geo.in_h * geo.in_w, geo, cols.data());
    MatMap<T>(out.data().data() + n * Co * P, Co, P).noalias() = W * ConstMatMap<T>(cols.data(), K, P);
  }
  const std::size_t xid = x.id(), wid = weight.id();
  return x.graph().record("conv2d", {x, weight}, std::move(out), [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
    const auto& xv = g.value(xid);
    ConstMatMap<T> Wm(g.value(wid).data().data(), Co, K);
    std::vector<T> c(K * P);
    const std::size_t img = geo.channels * geo.in_h * geo.in_w;
    for (std::size_t n = 0; n < N; ++n) {
      ConstMatMap<T> G(go.data().data() + n * Co * P, Co, P);
      if (g.requires_grad(wid)) {
        im2col(xv.data().data() + n * img, geo, c.data());
        MatMap<T>(g.grad_slot(wid).data().data(), Co, K).noalias() += G * ConstMatMap<T>(c.data(), K, P).transpose();
      }
      if (g.requires_grad(xid)) {
        MatMap<T>(c.data(), K, P).noalias() = Wm.transpose() * G;
        col2im(c.data(), geo, g.grad_slot(xid).data().data() + n * img);
      }
    }
  });
}

/// Transposed convolution (adjoint of conv2d w.r.t. its input).
/// x [N,Cin,H,W], weight [Cin,Cout,kh,kw]. The full output has extent
/// (H-1)*stride + kh; `pad` and `crop` are both trimmed from its sides.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, std::size_t stride = 1, Padding pad = {},
                        Padding crop = {}) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  detail::require_rank4(xs, "conv_transpose2d", "input");
  detail::require_rank4(ws, "conv_transpose2d", "weight");
  if (xs[1] != ws[0])
    throw ShapeError("conv_transpose2d: input has " + std::to_string(xs[1]) + " channels but weight " +
                     to_string(ws) + " expects " + std::to_string(ws[0]));
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const Padding trim = pad + crop;
  const long long full_h = static_cast<long long>((xs[2] - 1) * stride + ws[2]);
  const long long full_w = static_cast<long long>((xs[3] - 1) * stride + ws[3]);
  const long long oh = full_h - static_cast<long long>(trim.top + trim.bottom);
  const long long ow = full_w - static_cast<long long>(trim.left + trim.right);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv_transpose2d: padding/crop leave a non-positive output extent " + std::to_string(oh) +
                     "x" + std::to_string(ow));
  // Geometry of the equivalent forward convolution over the output image.
  const auto geo = ConvGeometry::make(ws[1], static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ws[2],
                                      ws[3], stride, trim);
  const std::size_t N = xs[0], Ci = xs[1], Co = ws[1], K = geo.col_rows(), P = geo.col_cols();
  Tensor<T> out({N, Co, geo.in_h, geo.in_w});
  std::vector<T> cols(K * P);
  ConstMatMap<T> W(weight.value().data().data(), Ci, K);
  const std::size_t out_img = Co * geo.in_h * geo.in_w;
  for (std::size_t n = 0; n < N; ++n) {
    MatMap<T>(cols.data(), K, P).noalias() = W.transpose() * ConstMatMap<T>(x.value().data().data() + n * Ci * P, Ci, P);
    col2im(cols.data(), geo, out.data().data() + n * out_img);
  }
  const std::size_t xid = x.id(), wid = weight.id();
  return x.graph().record(
      "conv_transpose2d", {x, weight}, std::move(out), [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
        const auto& xv = g.value(xid);
        ConstMatMap<T> Wm(g.value(wid).data().data(), Ci, K);
        std::vector<T> c(K * P);
        for (std::size_t n = 0; n < N; ++n) {
          im2col(go.data().data() + n * out_img, geo, c.data());
          ConstMatMap<T> GC(c.data(), K, P);
          if (g.requires_grad(xid))
            MatMap<T>(g.grad_slot(xid).data().data() + n * Ci * P, Ci, P).noalias() += Wm * GC;
          if (g.requires_grad(wid))
            MatMap<T>(g.grad_slot(wid).data().data(), Ci, K).noalias() +=
                ConstMatMap<T>(xv.data().data() + n * Ci * P, Ci, P) * GC.transpose();
        }
      });
}

namespace detail {

// Bilinear read of one channel plane with zero outside the bounds.
template <class T>
struct BilinearTap {
  long long y0, x0;
  T fy, fx;

  BilinearTap(T py, T px) {
    const T fly = std::floor(py), flx = std::floor(px);
    y0 = static_cast<long long>(fly);
    x0 = static_cast<long long>(flx);
    fy = py - fly;
    fx = px - flx;
  }

  static T read(const T* plane, long long h, long long w, long long y, long long x) {
    return (y >= 0 && x >= 0 && y < h && x < w) ? plane[y * w + x] : T{0};
  }

  T sample(const T* plane, long long h, long long w) const {
    return (T{1} - fy) * (T{1} - fx) * read(plane, h, w, y0, x0) + (T{1} - fy) * fx * read(plane, h, w, y0, x0 + 1) +
           fy * (T{1} - fx) * read(plane, h, w, y0 + 1, x0) + fy * fx * read(plane, h, w, y0 + 1, x0 + 1);
  }
};

}  // namespace detail

/// Deformable convolution. offsets [N, 2*kh*kw, H', W'] hold (dy, dx) for each
/// kernel tap in row-major tap order; samples are bilinear with zero padding.
/// With all offsets zero the result equals conv2d exactly.
template <class T>
Var<T> deformable_conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& offsets, std::size_t stride = 1,
                         Padding pad = {}) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  const auto& os = offsets.shape();
  detail::require_rank4(xs, "deformable_conv2d", "input");
  detail::require_rank4(ws, "deformable_conv2d", "weight");
  detail::require_rank4(os, "deformable_conv2d", "offsets");
  if (xs[1] != ws[1])
    throw ShapeError("deformable_conv2d: input has " + std::to_string(xs[1]) + " channels but weight " +
                     to_string(ws) + " expects " + std::to_string(ws[1]));
  const auto geo = ConvGeometry::make(xs[1], xs[2], xs[3], ws[2], ws[3], stride, pad);
  const std::size_t taps = ws[2] * ws[3];
  if (os[1] != 2 * taps)
    throw ShapeError("deformable_conv2d: offsets need " + std::to_string(2 * taps) + " channels, got " +
                     std::to_string(os[1]));
  if (os[0] != xs[0] || os[2] != geo.out_h || os[3] != geo.out_w)
    throw ShapeError("deformable_conv2d: offsets shape " + to_string(os) + " does not match output grid " +
                     std::to_string(geo.out_h) + "x" + std::to_string(geo.out_w));

  const std::size_t N = xs[0], C = xs[1], Co = ws[0], K = geo.col_rows(), P = geo.col_cols();
  const long long H = static_cast<long long>(geo.in_h), Wd = static_cast<long long>(geo.in_w);
  const std::size_t img = C * geo.in_h * geo.in_w;

  // Visits every (channel, tap, output position) with its sampling position.
  auto for_each_sample = [=](const T* off, auto&& fn) {
    for (std::size_t ky = 0; ky < geo.k_h; ++ky)
      for (std::size_t kx = 0; kx < geo.k_w; ++kx) {
        const std::size_t tap = ky * geo.k_w + kx;
        const T* dy = off + (2 * tap) * P;
        const T* dx = off + (2 * tap + 1) * P;
        for (std::size_t oy = 0; oy < geo.out_h; ++oy)
          for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
            const std::size_t p = oy * geo.out_w + ox;
            const detail::BilinearTap<T> b(static_cast<T>(geo.src_y(oy, ky)) + dy[p],
                                           static_cast<T>(geo.src_x(ox, kx)) + dx[p]);
            for (std::size_t c = 0; c < C; ++c) fn(c, tap, p, b);
          }
      }
  };

  Tensor<T> out({N, Co, geo.out_h, geo.out_w});
  std::vector<T> cols(K * P);
  ConstMatMap<T> W(weight.value().data().data(), Co, K);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xin = x.value().data().data() + n * img;
    for_each_sample(offsets.value().data().data() + n * 2 * taps * P,
                    [&](std::size_t c, std::size_t tap, std::size_t p, const detail::BilinearTap<T>& b) {
                      cols[(c * taps + tap) * P + p] = b.sample(xin + c * geo.in_h * geo.in_w, H, Wd);
                    });
    MatMap<T>(out.data().data() + n * Co * P, Co, P).noalias() = W * ConstMatMap<T>(cols.data(), K, P);
  }

  const std::size_t xid = x.id(), wid = weight.id(), oid = offsets.id();
  return x.graph().record(
      "deformable_conv2d", {x, weight, offsets}, std::move(out),
      [=](Graph<T>& g, std::size_t, const Tensor<T>& go) {
        const auto& xv = g.value(xid);
        const auto& ov = g.value(oid);
        ConstMatMap<T> Wm(g.value(wid).data().data(), Co, K);
        const bool gx_on = g.requires_grad(xid), gw_on = g.requires_grad(wid), go_on = g.requires_grad(oid);
        std::vector<T> c(K * P), dc(K * P);
        for (std::size_t n = 0; n < N; ++n) {
          const T* xin = xv.data().data() + n * img;
          const T* off = ov.data().data() + n * 2 * taps * P;
          ConstMatMap<T> G(go.data().data() + n * Co * P, Co, P);
          if (gw_on) {
            for_each_sample(off, [&](std::size_t ch, std::size_t tap, std::size_t p, const detail::BilinearTap<T>& b) {
              c[(ch * taps + tap) * P + p] = b.sample(xin + ch * geo.in_h * geo.in_w, H, Wd);
            });
            MatMap<T>(g.grad_slot(wid).data().data(), Co, K).noalias() += G * ConstMatMap<T>(c.data(), K, P).transpose();
          }
          if (!gx_on && !go_on) continue;
          MatMap<T>(dc.data(), K, P).noalias() = Wm.transpose() * G;
          T* gx = gx_on ? g.grad_slot(xid).data().data() + n * img : nullptr;
          T* goff = go_on ? g.grad_slot(oid).data().data() + n * 2 * taps * P : nullptr;
          for_each_sample(off, [&](std::size_t ch, std::size_t tap, std::size_t p, const detail::BilinearTap<T>& b) {
            const T d = dc[(ch * taps + tap) * P + p];
            if (d == T{0}) return;
            const T* plane = xin + ch * geo.in_h * geo.in_w;
            if (gx) {
              T* gplane = gx + ch * geo.in_h * geo.in_w;
              auto put = [&](long long yy, long long xx, T wgt) {
                if (yy >= 0 && xx >= 0 && yy < H && xx < Wd) gplane[yy * Wd + xx] += d * wgt;
              };
              put(b.y0, b.x0, (T{1} - b.fy) * (T{1} - b.fx));
              put(b.y0, b.x0 + 1, (T{1} - b.fy) * b.fx);
              put(b.y0 + 1, b.x0, b.fy * (T{1} - b.fx));
              put(b.y0 + 1, b.x0 + 1, b.fy * b.fx);
            }
            if (goff) {
              using Tap = detail::BilinearTap<T>;
              const T v00 = Tap::read(plane, H, Wd, b.y0, b.x0), v01 = Tap::read(plane, H, Wd, b.y0, b.x0 + 1);
              const T v10 = Tap::read(plane, H, Wd, b.y0 + 1, b.x0), v11 = Tap::read(plane, H, Wd, b.y0 + 1, b.x0 + 1);
              goff[(2 * tap) * P + p] += d * ((T{1} - b.fx) * (v10 - v00) + b.fx * (v11 - v01));
              goff[(2 * tap + 1) * P + p] += d * ((T{1} - b.fy) * (v01 - v00) + b.fy * (v11 - v10));
            }
          });
        }
      });
}

}  // namespace hsnn
