#pragma once

// Real residual, pseudo-residual and the lossless branch: two pre-process
// networks, their fusion, and three heads emitting per-pixel mixture
// parameters for both planes.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hpdc/bitsplit.hpp"
#include "hpdc/likelihood.hpp"
#include "hpdc/lossy.hpp"
#include "hpdc/nn/layers.hpp"

namespace hpdc {

inline constexpr double kHeadInitGain = 0.01;

enum class Fusion { gated, concat };

inline Fusion parse_fusion(const std::string& s) {
  if (s == "gated") return Fusion::gated;
  if (s == "concat") return Fusion::concat;
  throw ArgumentError("unknown fusion '" + s + "'");
}

inline const char* fusion_name(Fusion f) { return f == Fusion::gated ? "gated" : "concat"; }

inline double round_half_away(double v) { return std::round(v); }

/// Integer level predicted for a plane from its normalized reconstruction.
inline std::int64_t predict_level(double x_tilde_norm, double scale, std::uint32_t max_level) {
  const double v = round_half_away(x_tilde_norm * scale);
  if (!(v > 0)) return 0;  // also catches NaN
  return v >= max_level ? static_cast<std::int64_t>(max_level) : static_cast<std::int64_t>(v);
}

/// Integer residual of both planes, in plane units, over the original extent.
struct ResidualPlane {
  int width = 0;
  int height = 0;
  std::array<std::vector<std::int32_t>, 2> r;
  std::array<std::int32_t, 2> r_min{0, 0};
  std::array<std::int32_t, 2> r_max{0, 0};

  friend bool operator==(const ResidualPlane&, const ResidualPlane&) = default;
};

/// Largest level of each plane: (floor((2^B - 1) / d), d - 1).
inline std::array<std::uint32_t, 2> plane_max_levels(int bits, std::uint32_t d) {
  return {SplitPlanes::msb_levels(bits, d), d - 1};
}

/// r = x - clamp(round(x_tilde * s), 0, max). `x_tilde` is (1, 2, >=H, >=W)
/// in normalized units; only the top-left H x W window is used.
inline ResidualPlane compute_residual(const SplitPlanes& planes, const nn::Tensor<float>& x_tilde) {
  const PlaneScales s = PlaneScales::for_split(planes.bit_depth, planes.d);
  const auto top = plane_max_levels(planes.bit_depth, planes.d);
  const int h = static_cast<int>(planes.height);
  const int w = static_cast<int>(planes.width);
  if (x_tilde.shape().c != 2 || x_tilde.shape().h < h || x_tilde.shape().w < w)
    throw ShapeError("compute_residual: reconstruction " + x_tilde.shape().str() + " does not cover the map");
  ResidualPlane out;
  out.width = w;
  out.height = h;
  for (int c = 0; c < 2; ++c) {
    const auto& level = c == 0 ? planes.msb : planes.lsb;
    auto& r = out.r[c];
    r.resize(level.size());
    std::int32_t lo = std::numeric_limits<std::int32_t>::max();
    std::int32_t hi = std::numeric_limits<std::int32_t>::min();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const auto pred = predict_level(x_tilde.at(0, c, y, x), s[c], top[c]);
        r[i] = static_cast<std::int32_t>(static_cast<std::int64_t>(level[i]) - pred);
        lo = std::min(lo, r[i]);
        hi = std::max(hi, r[i]);
      }
    out.r_min[c] = r.empty() ? 0 : lo;
    out.r_max[c] = r.empty() ? 0 : hi;
  }
  return out;
}

/// Inverse of compute_residual: levels = clamp(round(x_tilde * s), 0, max) + r.
inline SplitPlanes apply_residual(const ResidualPlane& res, const nn::Tensor<float>& x_tilde, int bits,
                                  std::uint32_t d) {
  const PlaneScales s = PlaneScales::for_split(bits, d);
  const auto top = plane_max_levels(bits, d);
  SplitPlanes p;
  p.width = static_cast<std::uint32_t>(res.width);
  p.height = static_cast<std::uint32_t>(res.height);
  p.d = d;
  p.bit_depth = bits;
  for (int c = 0; c < 2; ++c) {
    auto& level = c == 0 ? p.msb : p.lsb;
    level.resize(res.r[c].size());
    for (int y = 0; y < res.height; ++y)
      for (int x = 0; x < res.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * res.width + x;
        const std::int64_t v = predict_level(x_tilde.at(0, c, y, x), s[c], top[c]) + res.r[c][i];
        if (v < 0 || v > top[c]) throw DecodeError("reconstructed level out of range");
        level[i] = static_cast<std::uint32_t>(v);
      }
  }
  return p;
}

/// x_tilde - C(x_tilde) in normalized units; the second lossy pass.
template <class T>
nn::Var<T> pseudo_residual(const LossyNet<T>& lossy, const nn::Var<T>& x_tilde, QuantMode mode, NoiseSource* noise,
                           bool detach_second_pass = false) {
  const nn::Var<T> input = detach_second_pass ? nn::detach(x_tilde) : x_tilde;
  return nn::sub(x_tilde, lossy.reconstruct(input, mode, noise));
}

/// Mixture parameters in plane units, each (N, 2K, H, W) with channel p*K + k.
template <class T>
struct LmmVars {
  nn::Var<T> logits;
  nn::Var<T> loc;
  nn::Var<T> scale;
};

template <class T>
class LosslessNet {
 public:
  LosslessNet() = default;
  LosslessNet(nn::ParamSet<T>& ps, int channels, int K, Fusion fusion, nn::Rng& rng)
      : channels_(channels), K_(K), fusion_(fusion) {
    if (K < 1 || K > kMaxMixture) throw ArgumentError("mixture size K must be in [1, 16]");
    const int m = channels;
    pseudo_in_ = nn::Conv2d<T>(ps, "lossless.pseudo.in", 2, m, 3, 1, rng);
    pseudo_res_ = nn::ResidualStack<T>(ps, "lossless.pseudo.res", m, 4, rng);
    pseudo_att_ = nn::AttentionBlock<T>(ps, "lossless.pseudo.att", m, rng);

    unet_in_ = nn::Conv2d<T>(ps, "lossless.unet.in", 2, m, 3, 1, rng);
    for (int i = 0; i < 3; ++i)
      unet_enc_[i] = nn::ResidualBlock<T>(ps, "lossless.unet.enc" + std::to_string(i), m, rng);
    for (int i = 0; i < 2; ++i) {
      unet_down_[i] = nn::Conv2d<T>(ps, "lossless.unet.down" + std::to_string(i), m, m, 3, 2, rng);
      unet_up_[i] = nn::SubpixelConv<T>(ps, "lossless.unet.up" + std::to_string(i), m, m, 2, rng);
      unet_merge_[i] = nn::Conv2d<T>(ps, "lossless.unet.merge" + std::to_string(i), 2 * m, m, 1, 1, rng);
      unet_dec_[i] = nn::ResidualBlock<T>(ps, "lossless.unet.dec" + std::to_string(i), m, rng);
    }

    if (fusion == Fusion::gated) {
      fuse_gate_ = nn::Conv2d<T>(ps, "lossless.fuse.gate", m, m, 1, 1, rng);
      fuse_add_ = nn::Conv2d<T>(ps, "lossless.fuse.add", m, m, 3, 1, rng);
    } else {
      fuse_cat_ = nn::Conv2d<T>(ps, "lossless.fuse.cat", 2 * m, m, 1, 1, rng);
    }
    fuse_res_ = nn::ResidualStack<T>(ps, "lossless.fuse.res", m, 2, rng);

    const char* names[3] = {"weight", "loc", "scale"};
    for (int h = 0; h < 3; ++h) {
      const std::string base = std::string("lossless.head.") + names[h];
      head_res_[h] = nn::ResidualStack<T>(ps, base + ".res", m, 5, rng);
      head_out_[h] = nn::Conv2d<T>(ps, base + ".out", m, 2 * K, 3, 1, rng);
      // Near-zero heads start every pixel at a broad, almost uniform mixture.
      for (auto& v : head_out_[h].weight.mutable_value().vec()) v = static_cast<T>(v * kHeadInitGain);
    }
  }

  int channels() const { return channels_; }
  int mixtures() const { return K_; }
  Fusion fusion() const { return fusion_; }

  nn::Var<T> preprocess_pseudo(const nn::Var<T>& r_est) const {
    return pseudo_att_(pseudo_res_(pseudo_in_(r_est)));
  }

  /// Two-level U-net; H and W must be multiples of 4.
  nn::Var<T> preprocess_lossy(const nn::Var<T>& x_tilde) const {
    const auto s = x_tilde.shape();
    if (s.h % 4 != 0 || s.w % 4 != 0) throw ShapeError("lossy pre-process input " + s.str() + " not divisible by 4");
    const T slope = static_cast<T>(nn::kLeakySlope);
    auto s1 = unet_enc_[0](unet_in_(x_tilde));
    auto s2 = unet_enc_[1](nn::leaky_relu(unet_down_[0](s1), slope));
    auto h = unet_enc_[2](nn::leaky_relu(unet_down_[1](s2), slope));
    h = unet_dec_[0](unet_merge_[0](nn::concat_channels(unet_up_[0](h), s2)));
    return unet_dec_[1](unet_merge_[1](nn::concat_channels(unet_up_[1](h), s1)));
  }

  nn::Var<T> fuse(const nn::Var<T>& f_pseudo, const nn::Var<T>& f_lossy) const {
    if (fusion_ == Fusion::gated) {
      auto gated = nn::mul(f_pseudo, nn::sigmoid(fuse_gate_(f_lossy)));
      return fuse_res_(nn::add(gated, fuse_add_(f_lossy)));
    }
    return fuse_res_(fuse_cat_(nn::concat_channels(f_pseudo, f_lossy)));
  }

  /// Raw head outputs (logits, location, log-scale), each (N, 2K, H, W).
  std::array<nn::Var<T>, 3> heads(const nn::Var<T>& fused) const {
    std::array<nn::Var<T>, 3> out;
    for (int h = 0; h < 3; ++h) out[h] = head_out_[h](head_res_[h](fused));
    return out;
  }

  /// Full lossless branch. Locations and scales are expressed in plane units
  /// by multiplying the normalized head outputs with the plane scales.
  LmmVars<T> forward(const nn::Var<T>& x_tilde, const nn::Var<T>& r_est, const PlaneScales& scales) const {
    const auto raw = heads(fuse(preprocess_pseudo(r_est), preprocess_lossy(x_tilde)));
    return lmm_vars(raw, scales);
  }

  LmmVars<T> lmm_vars(const std::array<nn::Var<T>, 3>& raw, const PlaneScales& scales) const {
    std::vector<T> factors(2 * K_);
    for (int p = 0; p < 2; ++p)
      for (int k = 0; k < K_; ++k) factors[p * K_ + k] = static_cast<T>(scales[p]);
    LmmVars<T> v;
    v.logits = raw[0];
    v.loc = nn::scale_channels(raw[1], factors);
    auto sigma = nn::scale_channels(nn::exp(nn::clamp(raw[2], T(-30), T(30))), factors);
    v.scale = nn::clamp(sigma, static_cast<T>(kMinScale), std::numeric_limits<T>::max());
    return v;
  }

 private:
  int channels_ = 0;
  int K_ = 3;
  Fusion fusion_ = Fusion::gated;
  nn::Conv2d<T> pseudo_in_;
  nn::ResidualStack<T> pseudo_res_;
  nn::AttentionBlock<T> pseudo_att_;
  nn::Conv2d<T> unet_in_;
  nn::ResidualBlock<T> unet_enc_[3];
  nn::Conv2d<T> unet_down_[2];
  nn::SubpixelConv<T> unet_up_[2];
  nn::Conv2d<T> unet_merge_[2];
  nn::ResidualBlock<T> unet_dec_[2];
  nn::Conv2d<T> fuse_gate_;
  nn::Conv2d<T> fuse_add_;
  nn::Conv2d<T> fuse_cat_;
  nn::ResidualStack<T> fuse_res_;
  nn::ResidualStack<T> head_res_[3];
  nn::Conv2d<T> head_out_[3];
};

/// Per-pixel mixture of both planes over an H x W window, computed in double
/// from the network outputs. Component (c, i, k) lives at ((c*H*W) + i)*K + k.
struct LmmField {
  int width = 0;
  int height = 0;
  int K = 0;
  Family family = Family::laplace;
  std::vector<Component> comps;

  std::span<const Component> at(int channel, std::size_t pixel) const {
    const std::size_t hw = static_cast<std::size_t>(width) * height;
    return {comps.data() + (channel * hw + pixel) * K, static_cast<std::size_t>(K)};
  }

  friend bool operator==(const LmmField& a, const LmmField& b) {
    if (a.width != b.width || a.height != b.height || a.K != b.K || a.family != b.family) return false;
    if (a.comps.size() != b.comps.size()) return false;
    for (std::size_t i = 0; i < a.comps.size(); ++i) {
      const auto& x = a.comps[i];
      const auto& y = b.comps[i];
      if (x.weight != y.weight || x.loc != y.loc || x.scale != y.scale) return false;
    }
    return true;
  }
};

/// Softmax weights, locations and scales of sample 0 over the top-left
/// height x width window.
template <class T>
LmmField lmm_field(const LmmVars<T>& v, int K, Family family, int width, int height) {
  const auto& lg = v.logits.value();
  const auto& lc = v.loc.value();
  const auto& sc = v.scale.value();
  if (lg.shape().c != 2 * K) throw ShapeError("lmm_field: expected 2K channels");
  LmmField f;
  f.width = width;
  f.height = height;
  f.K = K;
  f.family = family;
  const std::size_t hw = static_cast<std::size_t>(width) * height;
  f.comps.resize(2 * hw * K);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        Component* out = f.comps.data() + (c * hw + i) * K;
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(lg.at(0, c * K + k, y, x)));
        double total = 0;
        for (int k = 0; k < K; ++k) {
          out[k].weight = std::exp(static_cast<double>(lg.at(0, c * K + k, y, x)) - mx);
          total += out[k].weight;
        }
        for (int k = 0; k < K; ++k) {
          out[k].weight /= total;
          out[k].loc = static_cast<double>(lc.at(0, c * K + k, y, x));
          out[k].scale = std::max(static_cast<double>(sc.at(0, c * K + k, y, x)), kMinScale);
        }
      }
  return f;
}

}  // namespace hpdc
