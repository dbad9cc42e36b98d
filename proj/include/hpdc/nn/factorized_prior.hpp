#pragma once

// Per-channel learned monotone CDF for the hyper-latent: a cascade of
// softplus-weighted affine maps with tanh gates, squashed by a sigmoid.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hpdc/likelihood.hpp"
#include "hpdc/nn/layers.hpp"

namespace hpdc::nn {

template <class T>
class FactorizedPrior {
 public:
  static constexpr int kLayers = 4;
  static constexpr std::array<int, kLayers + 1> kDims{1, 3, 3, 3, 1};

  FactorizedPrior() = default;
  FactorizedPrior(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng) : channels_(channels) {
    const double scale = std::pow(10.0, 1.0 / kLayers);
    std::uniform_real_distribution<double> bias_init(-0.5, 0.5);
    for (int l = 0; l < kLayers; ++l) {
      const int in = kDims[l];
      const int out = kDims[l + 1];
      const double m_init = std::log(std::expm1(1.0 / scale / out));
      matrices_[l] = ps.add(name + ".matrix" + std::to_string(l), Tensor<T>({1, channels, out, in}, T(m_init)));
      Tensor<T> b({1, channels, out, 1});
      for (auto& v : b.vec()) v = static_cast<T>(bias_init(rng));
      biases_[l] = ps.add(name + ".bias" + std::to_string(l), std::move(b));
      if (l + 1 < kLayers) factors_[l] = ps.add(name + ".factor" + std::to_string(l), Tensor<T>({1, channels, out, 1}));
    }
  }

  int channels() const { return channels_; }

  /// Cascade output (pre-sigmoid) for channel c at u.
  double logit(int c, double u) const {
    Trace t;
    forward(c, u, t);
    return t.x[kLayers][0];
  }

  /// Learned CDF of channel c.
  double cdf(int c, double u) const { return dist::cdf(Family::logistic, logit(c, u)); }

  /// Probability of integer symbol v in channel c.
  double pmf(int c, double v) const {
    return std::exp(dist::log_interval(Family::logistic, logit(c, v - 0.5), logit(c, v + 0.5)));
  }

  /// Total bits of z (N, C, h, w) under the prior, differentiable in z and
  /// the prior's parameters.
  Var<T> bits(const Var<T>& z) const {
    const Shape s = z.shape();
    if (s.c != channels_) throw ShapeError("factorized prior: channel mismatch");
    double total = 0;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* p = z.value().plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i)
          total -= dist::log_interval(Family::logistic, logit(c, p[i] - 0.5), logit(c, p[i] + 0.5));
      }
    std::vector<Var<T>> inputs{z};
    for (int l = 0; l < kLayers; ++l) {
      inputs.push_back(matrices_[l]);
      inputs.push_back(biases_[l]);
      if (l + 1 < kLayers) inputs.push_back(factors_[l]);
    }
    const FactorizedPrior self_copy = *this;
    return make_result<T>(Tensor<T>({1, 1, 1, 1}, static_cast<T>(total / dist::kLn2)), std::move(inputs),
                          [self_copy](Node<T>& node) { self_copy.backward_bits(node); });
  }

 private:
  struct Trace {
    double x[kLayers + 1][3];
    double pre[kLayers][3];
  };

  static double softplus(double v) { return v > 30 ? v : std::log1p(std::exp(v)); }
  static double sigmoid(double v) { return v >= 0 ? 1 / (1 + std::exp(-v)) : std::exp(v) / (1 + std::exp(v)); }

  void forward(int c, double u, Trace& t) const {
    t.x[0][0] = u;
    for (int l = 0; l < kLayers; ++l) {
      const int in = kDims[l];
      const int out = kDims[l + 1];
      const T* m = matrices_[l].value().plane(0, c);
      const T* b = biases_[l].value().plane(0, c);
      for (int i = 0; i < out; ++i) {
        double acc = b[i];
        for (int j = 0; j < in; ++j) acc += softplus(m[i * in + j]) * t.x[l][j];
        t.pre[l][i] = acc;
        if (l + 1 < kLayers) {
          const double f = factors_[l].value().plane(0, c)[i];
          t.x[l + 1][i] = acc + std::tanh(f) * std::tanh(acc);
        } else {
          t.x[l + 1][i] = acc;
        }
      }
    }
  }

  // Pushes d(out)/d(logit) = g back through the cascade of channel c;
  // returns d/du. Parameter grads (when present) accumulate.
  double backward_cascade(int c, const Trace& t, double g, Node<T>& node) const {
    double dx[3] = {g, 0, 0};
    std::size_t slot = 1 + 3 * (kLayers - 1) + 2;  // index past the last layer's entries
    for (int l = kLayers - 1; l >= 0; --l) {
      const int in = kDims[l];
      const int out = kDims[l + 1];
      const bool gated = l + 1 < kLayers;
      slot -= gated ? 3 : 2;
      Tensor<T>* gm = parent_grad(node, slot);
      Tensor<T>* gb = parent_grad(node, slot + 1);
      Tensor<T>* gf = gated ? parent_grad(node, slot + 2) : nullptr;
      const T* m = matrices_[l].value().plane(0, c);
      double dpre[3];
      for (int i = 0; i < out; ++i) {
        if (gated) {
          const double tf = std::tanh(static_cast<double>(factors_[l].value().plane(0, c)[i]));
          const double tp = std::tanh(t.pre[l][i]);
          dpre[i] = dx[i] * (1 + tf * (1 - tp * tp));
          if (gf) gf->plane(0, c)[i] += static_cast<T>(dx[i] * tp * (1 - tf * tf));
        } else {
          dpre[i] = dx[i];
        }
        if (gb) gb->plane(0, c)[i] += static_cast<T>(dpre[i]);
      }
      double dxin[3] = {0, 0, 0};
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) {
          const double mv = m[i * in + j];
          if (gm) gm->plane(0, c)[i * in + j] += static_cast<T>(dpre[i] * t.x[l][j] * sigmoid(mv));
          dxin[j] += dpre[i] * softplus(mv);
        }
      for (int j = 0; j < 3; ++j) dx[j] = dxin[j];
    }
    return dx[0];
  }

  void backward_bits(Node<T>& node) const {
    const double up = static_cast<double>(node.grad[0]) / dist::kLn2;
    const auto& z = node.parents[0]->value;
    Tensor<T>* gz = parent_grad(node, 0);
    const Shape s = z.shape();
    Trace lo, hi;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* p = z.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          forward(c, p[i] - 0.5, lo);
          forward(c, p[i] + 0.5, hi);
          const auto g = dist::log_interval_grad(Family::logistic, lo.x[kLayers][0], hi.x[kLayers][0]);
          // d(-log p) = -(d_zb dU + d_za dL)
          const double du_hi = backward_cascade(c, hi, -up * g.d_zb, node);
          const double du_lo = backward_cascade(c, lo, -up * g.d_za, node);
          if (gz) gz->plane(n, c)[i] += static_cast<T>(du_hi + du_lo);
        }
      }
  }

  int channels_ = 0;
  std::array<Var<T>, kLayers> matrices_;
  std::array<Var<T>, kLayers> biases_;
  std::array<Var<T>, kLayers - 1> factors_;
};

}  // namespace hpdc::nn
