#pragma once

// Lossy transform coder: analysis/synthesis transforms with a mean-scale
// hyperprior and a factorized hyper-latent density. No context model.

#include <cmath>
#include <random>
#include <utility>

#include "hpdc/likelihood.hpp"
#include "hpdc/nn/factorized_prior.hpp"
#include "hpdc/nn/layers.hpp"
#include "hpdc/nn/likelihood_ops.hpp"

namespace hpdc {

enum class QuantMode { train, infer };

/// Spatial factor between the input and the hyper-latent.
inline constexpr int kLatentStride = 16;
inline constexpr int kHyperStride = 64;

/// Source of additive uniform quantization noise in [-0.5, 0.5).
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed = 0) : rng_(seed) {}
  template <class T>
  nn::Tensor<T> draw(nn::Shape s) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    nn::Tensor<T> t(s);
    for (auto& v : t.vec()) v = static_cast<T>(u(rng_));
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

/// Train: v + U(-1/2, 1/2). Infer: round half away from zero (no gradient).
template <class T>
nn::Var<T> quantize_latent(const nn::Var<T>& v, QuantMode mode, NoiseSource* noise) {
  if (mode == QuantMode::train) {
    if (!noise) throw ArgumentError("training quantization needs a noise source");
    return nn::add(v, nn::Var<T>(noise->draw<T>(v.shape())));
  }
  nn::Tensor<T> out = v.value();
  for (auto& x : out.vec()) x = std::round(x);
  return nn::Var<T>(std::move(out));
}

template <class T>
struct HyperPrior {
  nn::Var<T> mean;
  nn::Var<T> scale;
};

template <class T>
struct LossyForward {
  nn::Var<T> y;
  nn::Var<T> y_hat;
  nn::Var<T> z_hat;
  HyperPrior<T> prior;
  nn::Var<T> x_tilde;
  nn::Var<T> rate_y_bits;  // undefined in infer mode unless requested
  nn::Var<T> rate_z_bits;
};

template <class T>
class LossyNet {
 public:
  LossyNet() = default;
  LossyNet(nn::ParamSet<T>& ps, int channels, nn::Rng& rng) : channels_(channels) {
    const int n = channels;
    down_[0] = nn::Conv2d<T>(ps, "lossy.ga.down0", 2, n, 3, 2, rng);
    for (int i = 1; i < 4; ++i) down_[i] = nn::Conv2d<T>(ps, "lossy.ga.down" + std::to_string(i), n, n, 3, 2, rng);
    for (int i = 0; i < 4; ++i) ga_res_[i] = nn::ResidualBlock<T>(ps, "lossy.ga.res" + std::to_string(i), n, rng);
    ga_att_[0] = nn::AttentionBlock<T>(ps, "lossy.ga.att0", n, rng);
    ga_att_[1] = nn::AttentionBlock<T>(ps, "lossy.ga.att1", n, rng);

    gs_att_[0] = nn::AttentionBlock<T>(ps, "lossy.gs.att0", n, rng);
    gs_att_[1] = nn::AttentionBlock<T>(ps, "lossy.gs.att1", n, rng);
    for (int i = 0; i < 4; ++i) gs_res_[i] = nn::ResidualBlock<T>(ps, "lossy.gs.res" + std::to_string(i), n, rng);
    for (int i = 0; i < 3; ++i) up_[i] = nn::SubpixelConv<T>(ps, "lossy.gs.up" + std::to_string(i), n, n, 2, rng);
    up_[3] = nn::SubpixelConv<T>(ps, "lossy.gs.up3", n, 2, 2, rng);

    ha_[0] = nn::Conv2d<T>(ps, "lossy.ha.conv0", n, n, 3, 1, rng);
    ha_[1] = nn::Conv2d<T>(ps, "lossy.ha.conv1", n, n, 3, 2, rng);
    ha_[2] = nn::Conv2d<T>(ps, "lossy.ha.conv2", n, n, 3, 2, rng);
    hs_up_[0] = nn::SubpixelConv<T>(ps, "lossy.hs.up0", n, n, 2, rng);
    hs_up_[1] = nn::SubpixelConv<T>(ps, "lossy.hs.up1", n, n, 2, rng);
    hs_out_ = nn::Conv2d<T>(ps, "lossy.hs.out", n, 2 * n, 3, 1, rng);

    prior_ = nn::FactorizedPrior<T>(ps, "lossy.prior", n, rng);
  }

  int channels() const { return channels_; }
  const nn::FactorizedPrior<T>& prior() const { return prior_; }

  /// (N, 2, H, W) -> (N, C, H/16, W/16). H and W must be multiples of 16.
  nn::Var<T> analysis(const nn::Var<T>& x) const {
    const auto s = x.shape();
    if (s.c != 2) throw ShapeError("analysis expects a 2-channel input");
    if (s.h % kLatentStride != 0 || s.w % kLatentStride != 0)
      throw ShapeError("analysis input " + s.str() + " not divisible by 16");
    const T slope = static_cast<T>(nn::kLeakySlope);
    auto h = ga_res_[0](nn::leaky_relu(down_[0](x), slope));
    h = ga_att_[0](ga_res_[1](nn::leaky_relu(down_[1](h), slope)));
    h = ga_res_[2](nn::leaky_relu(down_[2](h), slope));
    return ga_att_[1](ga_res_[3](down_[3](h)));
  }

  nn::Var<T> synthesis(const nn::Var<T>& y_hat) const {
    if (y_hat.shape().c != channels_) throw ShapeError("synthesis: latent channel mismatch");
    const T slope = static_cast<T>(nn::kLeakySlope);
    auto h = gs_res_[0](gs_att_[0](y_hat));
    h = gs_res_[1](nn::leaky_relu(up_[0](h), slope));
    h = gs_res_[2](gs_att_[1](nn::leaky_relu(up_[1](h), slope)));
    h = gs_res_[3](nn::leaky_relu(up_[2](h), slope));
    return up_[3](h);
  }

  nn::Var<T> hyper_analysis(const nn::Var<T>& y) const {
    const auto s = y.shape();
    if (s.h % 4 != 0 || s.w % 4 != 0) throw ShapeError("hyper analysis input " + s.str() + " not divisible by 4");
    const T slope = static_cast<T>(nn::kLeakySlope);
    auto h = nn::leaky_relu(ha_[0](y), slope);
    h = nn::leaky_relu(ha_[1](h), slope);
    return ha_[2](h);
  }

  /// Means and scales of the latent prior; scale = max(exp(raw), 1e-6).
  HyperPrior<T> hyper_synthesis(const nn::Var<T>& z_hat) const {
    const T slope = static_cast<T>(nn::kLeakySlope);
    auto h = nn::leaky_relu(hs_up_[0](z_hat), slope);
    h = nn::leaky_relu(hs_up_[1](h), slope);
    auto out = hs_out_(h);
    HyperPrior<T> p;
    p.mean = nn::slice_channels(out, 0, channels_);
    auto raw = nn::clamp(nn::slice_channels(out, channels_, channels_), T(-30), T(30));
    p.scale = nn::clamp(nn::exp(raw), static_cast<T>(kMinScale), std::numeric_limits<T>::max());
    return p;
  }

  /// Full pass x -> x_tilde with rates. In infer mode rates are still
  /// evaluated (on rounded symbols) only if `with_rates`.
  LossyForward<T> forward(const nn::Var<T>& x, QuantMode mode, NoiseSource* noise, bool with_rates = true) const {
    LossyForward<T> f;
    f.y = analysis(x);
    auto z = hyper_analysis(f.y);
    f.z_hat = quantize_latent(z, mode, noise);
    f.prior = hyper_synthesis(f.z_hat);
    f.y_hat = quantize_latent(f.y, mode, noise);
    f.x_tilde = synthesis(f.y_hat);
    if (with_rates) {
      f.rate_y_bits = nn::discretized_bits(f.y_hat, nn::Var<T>(), f.prior.mean, f.prior.scale, 1, Family::gaussian);
      f.rate_z_bits = prior_.bits(f.z_hat);
    }
    return f;
  }

  /// Reconstruction-only pass C(x) = synthesis(Q(analysis(x))); the hyper
  /// path does not influence it.
  nn::Var<T> reconstruct(const nn::Var<T>& x, QuantMode mode, NoiseSource* noise) const {
    return synthesis(quantize_latent(analysis(x), mode, noise));
  }

 private:
  int channels_ = 0;
  nn::Conv2d<T> down_[4];
  nn::ResidualBlock<T> ga_res_[4];
  nn::AttentionBlock<T> ga_att_[2];
  nn::AttentionBlock<T> gs_att_[2];
  nn::ResidualBlock<T> gs_res_[4];
  nn::SubpixelConv<T> up_[4];
  nn::Conv2d<T> ha_[3];
  nn::SubpixelConv<T> hs_up_[2];
  nn::Conv2d<T> hs_out_;
  nn::FactorizedPrior<T> prior_;
};

/// Sum of -log2 p(y_hat) under the discretized Gaussian prior, each
/// probability floored at 2^-16.
inline double rate_y(std::span<const double> y_hat, std::span<const double> mean, std::span<const double> scale) {
  double bits = 0;
  for (std::size_t i = 0; i < y_hat.size(); ++i)
    bits += symbol_bits(discretized_mass(Family::gaussian, y_hat[i], mean[i], std::max(scale[i], kMinScale)));
  return bits;
}

/// Sum of -log2(F(z + 1/2) - F(z - 1/2)) for any monotone CDF `F`, floored at 2^-16.
template <class Cdf>
double rate_z(std::span<const double> z_hat, Cdf&& cdf) {
  double bits = 0;
  for (double z : z_hat) bits += symbol_bits(cdf(z + 0.5) - cdf(z - 0.5));
  return bits;
}

}  // namespace hpdc
