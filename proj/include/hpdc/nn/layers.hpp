#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hpdc/nn/ops.hpp"

namespace hpdc::nn {

using Rng = std::mt19937_64;

inline constexpr double kLeakySlope = 0.01;
/// Gain applied to the Kaiming init of a residual branch's last conv, so
/// that deep stacks start close to the identity.
inline constexpr double kResidualBranchGain = 0.1;

/// Named, trainable tensors of one model, in registration order.
template <class T>
class ParamSet {
 public:
  Var<T> add(std::string name, Tensor<T> init) {
    Var<T> v(std::move(init), true);
    entries_.push_back({std::move(name), v});
    return v;
  }

  struct Entry {
    std::string name;
    Var<T> var;
  };

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  void fill(T v) {
    for (auto& e : entries_) e.var.mutable_value().fill(v);
  }

  Var<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.var;
    return nullptr;
  }

 private:
  std::vector<Entry> entries_;
};

/// Kaiming-uniform (fan-in, leaky-ReLU gain) kernel, zero bias.
template <class T>
Tensor<T> kaiming_uniform(Shape s, Rng& rng) {
  const double fan_in = static_cast<double>(s.c) * s.h * s.w;
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, int cin, int cout, int k, int stride_, Rng& rng)
      : stride(stride_), pad(k / 2) {
    weight = ps.add(name + ".weight", kaiming_uniform<T>({cout, cin, k, k}, rng));
    bias = ps.add(name + ".bias", Tensor<T>({1, cout, 1, 1}));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

/// 3x3 conv producing C*r*r channels followed by a pixel shuffle.
template <class T>
struct SubpixelConv {
  Conv2d<T> conv;
  int factor = 2;

  SubpixelConv() = default;
  SubpixelConv(ParamSet<T>& ps, const std::string& name, int cin, int cout, int r, Rng& rng)
      : conv(ps, name, cin, cout * r * r, 3, 1, rng), factor(r) {}

  Var<T> operator()(const Var<T>& x) const { return subpixel_upsample(conv(x), factor); }
};

/// x + conv(leaky(conv(x))).
template <class T>
struct ResidualBlock {
  Conv2d<T> first;
  Conv2d<T> second;

  ResidualBlock() = default;
  ResidualBlock(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng)
      : first(ps, name + ".conv1", channels, channels, 3, 1, rng),
        second(ps, name + ".conv2", channels, channels, 3, 1, rng) {
    for (auto& v : second.weight.mutable_value().vec()) v = static_cast<T>(v * kResidualBranchGain);
  }

  Var<T> operator()(const Var<T>& x) const {
    return add(x, second(leaky_relu(first(x), static_cast<T>(kLeakySlope))));
  }
};

template <class T>
struct ResidualStack {
  std::vector<ResidualBlock<T>> blocks;

  ResidualStack() = default;
  ResidualStack(ParamSet<T>& ps, const std::string& name, int channels, int count, Rng& rng) {
    for (int i = 0; i < count; ++i) blocks.emplace_back(ps, name + "." + std::to_string(i), channels, rng);
  }

  Var<T> operator()(Var<T> x) const {
    for (const auto& b : blocks) x = b(x);
    return x;
  }
};

/// x + trunk(x) * sigmoid(mask(x)); both branches are three residual blocks
/// closed by a 1x1 conv.
template <class T>
struct AttentionBlock {
  ResidualStack<T> trunk;
  Conv2d<T> trunk_out;
  ResidualStack<T> mask;
  Conv2d<T> mask_out;

  AttentionBlock() = default;
  AttentionBlock(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng)
      : trunk(ps, name + ".trunk", channels, 3, rng),
        trunk_out(ps, name + ".trunk_out", channels, channels, 1, 1, rng),
        mask(ps, name + ".mask", channels, 3, rng),
        mask_out(ps, name + ".mask_out", channels, channels, 1, 1, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    return add(x, mul(trunk_out(trunk(x)), sigmoid(mask_out(mask(x)))));
  }
};

}  // namespace hpdc::nn
