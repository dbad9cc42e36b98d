#pragma once

// Differentiable rate terms: total bits of (noisy) symbols under discretized
// single-family or mixture densities.

#include <cmath>
#include <vector>

#include "hpdc/likelihood.hpp"
#include "hpdc/nn/ops.hpp"

namespace hpdc::nn {

namespace detail {

// Per-element evaluation shared by forward and backward. `logits` may be null
// (single component). Layout: values (N, P, H, W); params (N, P*K, H, W)
// with channel p*K + k.
template <class T>
struct MixtureEval {
  Family family;
  int K;

  // Returns -log(p) in nats; when grads are requested, fills per-component
  // d(-ln p)/d(loc_k), d(-ln p)/d(scale_k), d(-ln p)/d(logit_k) and returns
  // d(-ln p)/d(value) via `d_value`.
  double operator()(double v, const double* logit, const double* loc, const double* scale, double* d_loc,
                    double* d_scale, double* d_logit, double* d_value) const {
    double lw[16];
    double s[16];
    dist::IntervalGrad g[16];
    double lse_logit = 0;
    if (logit) {
      double mx = logit[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, logit[k]);
      double acc = 0;
      for (int k = 0; k < K; ++k) acc += std::exp(logit[k] - mx);
      lse_logit = mx + std::log(acc);
    }
    double smax = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      lw[k] = logit ? logit[k] - lse_logit : 0.0;
      const double za = (v - 0.5 - loc[k]) / scale[k];
      const double zb = (v + 0.5 - loc[k]) / scale[k];
      g[k] = d_value ? dist::log_interval_grad(family, za, zb) : dist::IntervalGrad{dist::log_interval(family, za, zb)};
      s[k] = lw[k] + g[k].log_p;
      smax = std::max(smax, s[k]);
    }
    double acc = 0;
    for (int k = 0; k < K; ++k) acc += std::exp(s[k] - smax);
    const double log_p = smax + std::log(acc);
    if (!d_value) return -log_p;

    *d_value = 0;
    for (int k = 0; k < K; ++k) {
      const double post = std::exp(s[k] - log_p);
      const double za = (v - 0.5 - loc[k]) / scale[k];
      const double zb = (v + 0.5 - loc[k]) / scale[k];
      const double dz = (g[k].d_za + g[k].d_zb) / scale[k];
      *d_value -= post * dz;
      d_loc[k] = post * dz;
      d_scale[k] = post * (za * g[k].d_za + zb * g[k].d_zb) / scale[k];
      if (d_logit) d_logit[k] = -(post - std::exp(lw[k]));
    }
    return -log_p;
  }
};

}  // namespace detail

/// Total bits sum_i -log2 p(values_i). `logits` may be an undefined Var for a
/// single component (K must then be 1).
template <class T>
Var<T> discretized_bits(const Var<T>& values, const Var<T>& logits, const Var<T>& loc, const Var<T>& scale, int K,
                        Family family) {
  const Shape sv = values.shape();
  const Shape sp{sv.n, sv.c * K, sv.h, sv.w};
  if (K < 1 || K > 16) throw ArgumentError("mixture size must be in [1, 16]");
  require_same(loc.shape(), sp, "discretized_bits(loc)");
  require_same(scale.shape(), sp, "discretized_bits(scale)");
  if (logits.defined())
    require_same(logits.shape(), sp, "discretized_bits(logits)");
  else if (K != 1)
    throw ArgumentError("mixture without logits must have K = 1");

  const detail::MixtureEval<T> eval{family, K};
  const std::size_t hw = sv.plane();
  double total = 0;
  double lg[16], lc[16], sc[16];
  for (int n = 0; n < sv.n; ++n)
    for (int p = 0; p < sv.c; ++p)
      for (std::size_t i = 0; i < hw; ++i) {
        for (int k = 0; k < K; ++k) {
          lc[k] = loc.value().plane(n, p * K + k)[i];
          sc[k] = scale.value().plane(n, p * K + k)[i];
          if (logits.defined()) lg[k] = logits.value().plane(n, p * K + k)[i];
        }
        total += eval(values.value().plane(n, p)[i], logits.defined() ? lg : nullptr, lc, sc, nullptr, nullptr,
                      nullptr, nullptr);
      }

  std::vector<Var<T>> inputs{values, loc, scale};
  if (logits.defined()) inputs.push_back(logits);
  const bool has_logits = logits.defined();
  return make_result<T>(
      Tensor<T>({1, 1, 1, 1}, static_cast<T>(total / dist::kLn2)), std::move(inputs),
      [eval, K, has_logits](Node<T>& self) {
        const double up = static_cast<double>(self.grad[0]) / dist::kLn2;
        const auto& vv = self.parents[0]->value;
        const auto& lv = self.parents[1]->value;
        const auto& sv_ = self.parents[2]->value;
        const Tensor<T>* gv = has_logits ? &self.parents[3]->value : nullptr;
        auto* g_val = parent_grad(self, 0);
        auto* g_loc = parent_grad(self, 1);
        auto* g_scale = parent_grad(self, 2);
        auto* g_logit = has_logits ? parent_grad(self, 3) : nullptr;
        const Shape s = vv.shape();
        const std::size_t hw = s.plane();
        double lg[16], lc[16], sc[16], dl[16], ds[16], dg[16];
        for (int n = 0; n < s.n; ++n)
          for (int p = 0; p < s.c; ++p)
            for (std::size_t i = 0; i < hw; ++i) {
              for (int k = 0; k < K; ++k) {
                lc[k] = lv.plane(n, p * K + k)[i];
                sc[k] = sv_.plane(n, p * K + k)[i];
                if (gv) lg[k] = gv->plane(n, p * K + k)[i];
              }
              double dv = 0;
              eval(vv.plane(n, p)[i], gv ? lg : nullptr, lc, sc, dl, ds, dg, &dv);
              if (g_val) g_val->plane(n, p)[i] += static_cast<T>(up * dv);
              for (int k = 0; k < K; ++k) {
                if (g_loc) g_loc->plane(n, p * K + k)[i] += static_cast<T>(up * dl[k]);
                if (g_scale) g_scale->plane(n, p * K + k)[i] += static_cast<T>(up * ds[k]);
                if (g_logit) g_logit->plane(n, p * K + k)[i] += static_cast<T>(up * dg[k]);
              }
            }
      });
}

}  // namespace hpdc::nn
