#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "hpdc/nn/autograd.hpp"

namespace hpdc::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = parent_grad(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& va = self.parents[0]->value;
    const auto& vb = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * vb[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * va[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
  });
}

/// Multiplies channel c by factors[c].
template <class T>
Var<T> scale_channels(const Var<T>& a, std::vector<T> factors) {
  const Shape s = a.shape();
  if (static_cast<int>(factors.size()) != s.c) throw ShapeError("scale_channels: factor count != channels");
  Tensor<T> out = a.value();
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) p[i] *= factors[c];
    }
  return make_result<T>(std::move(out), {a}, [factors = std::move(factors)](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const Shape s = self.value.shape();
    const std::size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T* pg = g->plane(n, c);
        const T* po = self.grad.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) pg[i] += po[i] * factors[c];
      }
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.01)) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T(0) ? v : v * slope;
  return make_result<T>(std::move(out), {a}, [slope](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * (x[i] > T(0) ? T(1) : slope);
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const T y = self.value[i];
      (*g)[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::exp(v);
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * self.value[i];
  });
}

/// Elementwise clamp; gradient is zero where the bound is active.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::clamp(v, lo, hi);
  return make_result<T>(std::move(out), {a}, [lo, hi](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < g->size(); ++i)
      if (x[i] >= lo && x[i] <= hi) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T total = T(0);
  for (T v : a.value().vec()) total += v;
  return make_result<T>(Tensor<T>({1, 1, 1, 1}, total), {a}, [](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const T up = self.grad[0];
    for (auto& v : g->vec()) v += up;
  });
}

/// Mean of squared differences over pixels whose weight is non-zero
/// (weights shaped (N,1,H,W)), averaged over channels too.
template <class T>
Var<T> masked_mse(const Var<T>& a, const Var<T>& b, const Tensor<T>& weights) {
  require_same(a.shape(), b.shape(), "masked_mse");
  const Shape s = a.shape();
  if (weights.shape() != Shape{s.n, 1, s.h, s.w}) throw ShapeError("masked_mse: weight shape mismatch");
  const std::size_t hw = s.plane();
  double count = 0;
  for (T w : weights.vec()) count += w != T(0) ? 1.0 : 0.0;
  const T denom = count > 0 ? static_cast<T>(count * s.c) : T(1);
  T total = T(0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* pa = a.value().plane(n, c);
      const T* pb = b.value().plane(n, c);
      const T* pw = weights.plane(n, 0);
      for (std::size_t i = 0; i < hw; ++i)
        if (pw[i] != T(0)) total += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    }
  return make_result<T>(Tensor<T>({1, 1, 1, 1}, total / denom), {a, b}, [weights, denom](Node<T>& self) {
    const Shape s = self.parents[0]->value.shape();
    const std::size_t hw = s.plane();
    const T up = self.grad[0] * T(2) / denom;
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* pa = self.parents[0]->value.plane(n, c);
        const T* pb = self.parents[1]->value.plane(n, c);
        const T* pw = weights.plane(n, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          if (pw[i] == T(0)) continue;
          const T d = up * (pa[i] - pb[i]);
          if (ga) ga->plane(n, c)[i] += d;
          if (gb) gb->plane(n, c)[i] -= d;
        }
      }
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) throw ShapeError("concat: spatial mismatch");
  Tensor<T> out({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t hw = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().plane(n, 0), sa.c * hw, out.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), sb.c * hw, out.plane(n, sa.c));
  }
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const int ca = self.parents[0]->value.shape().c;
    const int cb = self.parents[1]->value.shape().c;
    const Shape s = self.value.shape();
    const std::size_t hw = s.plane();
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (int n = 0; n < s.n; ++n) {
      if (ga) {
        T* dst = ga->plane(n, 0);
        const T* src = self.grad.plane(n, 0);
        for (std::size_t i = 0; i < ca * hw; ++i) dst[i] += src[i];
      }
      if (gb) {
        T* dst = gb->plane(n, 0);
        const T* src = self.grad.plane(n, ca);
        for (std::size_t i = 0; i < cb * hw; ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Var<T> slice_channels(const Var<T>& a, int start, int count) {
  const Shape s = a.shape();
  if (start < 0 || count < 1 || start + count > s.c) throw ShapeError("slice_channels: range out of bounds");
  Tensor<T> out({s.n, count, s.h, s.w});
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) std::copy_n(a.value().plane(n, start), count * hw, out.plane(n, 0));
  return make_result<T>(std::move(out), {a}, [start, count](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const Shape s = self.value.shape();
    const std::size_t len = count * s.plane();
    for (int n = 0; n < s.n; ++n) {
      T* dst = g->plane(n, start);
      const T* src = self.grad.plane(n, 0);
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

namespace detail {

// Rearranges (C*r*r, H, W) <-> (C, H*r, W*r); channel c*r*r + i*r + j lands at
// output offset (i, j) inside each r x r block.
template <class T>
void shuffle(const Tensor<T>& in, Tensor<T>& out, int r, bool forward) {
  const Shape so = out.shape();
  const Shape si = in.shape();
  const Shape& big = forward ? so : si;
  const Shape& small = forward ? si : so;
  for (int n = 0; n < big.n; ++n)
    for (int c = 0; c < big.c; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int sc = c * r * r + i * r + j;
          for (int h = 0; h < small.h; ++h)
            for (int w = 0; w < small.w; ++w) {
              const std::size_t si_idx = ((static_cast<std::size_t>(n) * small.c + sc) * small.h + h) * small.w + w;
              const std::size_t bi_idx =
                  ((static_cast<std::size_t>(n) * big.c + c) * big.h + (h * r + i)) * big.w + (w * r + j);
              if (forward)
                out[bi_idx] += in[si_idx];
              else
                out[si_idx] += in[bi_idx];
            }
        }
}

}  // namespace detail

template <class T>
Var<T> subpixel_upsample(const Var<T>& a, int r) {
  const Shape s = a.shape();
  if (r < 1 || s.c % (r * r) != 0) throw ShapeError("subpixel: channels not divisible by r^2");
  Tensor<T> out({s.n, s.c / (r * r), s.h * r, s.w * r});
  detail::shuffle(a.value(), out, r, true);
  return make_result<T>(std::move(out), {a}, [r](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) detail::shuffle(self.grad, *g, r, false);
  });
}

/// Exact inverse of subpixel_upsample.
template <class T>
Var<T> pixel_unshuffle(const Var<T>& a, int r) {
  const Shape s = a.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0) throw ShapeError("pixel_unshuffle: extent not divisible by r");
  Tensor<T> out({s.n, s.c * r * r, s.h / r, s.w / r});
  detail::shuffle(a.value(), out, r, false);
  return make_result<T>(std::move(out), {a}, [r](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) detail::shuffle(self.grad, *g, r, true);
  });
}

namespace detail {

template <class T>
void im2col(const T* src, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * ho * wo;
        const T* plane = src + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* dst) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * ho * wo;
        T* plane = dst + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* srcl = row + static_cast<std::size_t>(oy) * wo;
          T* line = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) line[ix] += srcl[ox];
          }
        }
      }
}

}  // namespace detail

/// Zero-padded cross-correlation. weight (Cout, Cin, k, k), bias (1, Cout, 1, 1).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape sx = x.shape();
  const Shape sw = weight.shape();
  if (sw.c != sx.c) throw ShapeError("conv2d: input has " + std::to_string(sx.c) + " channels, kernel expects " +
                                     std::to_string(sw.c));
  if (sw.h != sw.w) throw ShapeError("conv2d: kernel must be square");
  if (bias.shape() != Shape{1, sw.n, 1, 1}) throw ShapeError("conv2d: bias shape mismatch");
  const int k = sw.h;
  const int ho = (sx.h + 2 * pad - k) / stride + 1;
  const int wo = (sx.w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: input smaller than kernel");
  const int cout = sw.n;
  const int kdim = sx.c * k * k;
  const bool direct = k == 1 && stride == 1 && pad == 0;

  Tensor<T> out({sx.n, cout, ho, wo});
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kdim) * ho * wo);
  Eigen::Map<const detail::RowMat<T>> wm(weight.value().data(), cout, kdim);
  for (int n = 0; n < sx.n; ++n) {
    const T* src = x.value().plane(n, 0);
    if (!direct) detail::im2col(src, sx.c, sx.h, sx.w, k, stride, pad, ho, wo, col.data());
    Eigen::Map<const detail::RowMat<T>> cm(direct ? src : col.data(), kdim, ho * wo);
    Eigen::Map<detail::RowMat<T>> om(out.plane(n, 0), cout, ho * wo);
    om.noalias() = wm * cm;
    for (int c = 0; c < cout; ++c) om.row(c).array() += bias.value()[c];
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [stride, pad, k, ho, wo, kdim, direct](Node<T>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    const Shape sx = xv.shape();
    const int cout = wv.shape().n;
    auto* gx = parent_grad(self, 0);
    auto* gw = parent_grad(self, 1);
    auto* gb = parent_grad(self, 2);
    Eigen::Map<const detail::RowMat<T>> wm(wv.data(), cout, kdim);
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kdim) * ho * wo);
    std::vector<T> dcol(direct ? 0 : col.size());
    for (int n = 0; n < sx.n; ++n) {
      Eigen::Map<const detail::RowMat<T>> go(self.grad.plane(n, 0), cout, ho * wo);
      // Plain loop: Eigen's vectorized sum peels by address alignment, which
      // would make seeded training depend on where the buffer landed.
      if (gb)
        for (int c = 0; c < cout; ++c) {
          const T* g = self.grad.plane(n, c);
          T s = 0;
          for (int i = 0; i < ho * wo; ++i) s += g[i];
          (*gb)[c] += s;
        }
      if (gw) {
        const T* src = xv.plane(n, 0);
        if (!direct) detail::im2col(src, sx.c, sx.h, sx.w, k, stride, pad, ho, wo, col.data());
        Eigen::Map<const detail::RowMat<T>> cm(direct ? src : col.data(), kdim, ho * wo);
        Eigen::Map<detail::RowMat<T>> gwm(gw->data(), cout, kdim);
        gwm.noalias() += go * cm.transpose();
      }
      if (gx) {
        if (direct) {
          Eigen::Map<detail::RowMat<T>> gxm(gx->plane(n, 0), kdim, ho * wo);
          gxm.noalias() += wm.transpose() * go;
        } else {
          Eigen::Map<detail::RowMat<T>> dm(dcol.data(), kdim, ho * wo);
          dm.noalias() = wm.transpose() * go;
          detail::col2im(dcol.data(), sx.c, sx.h, sx.w, k, stride, pad, ho, wo, gx->plane(n, 0));
        }
      }
    }
  });
}

}  // namespace hpdc::nn
