#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "hpdc/nn/layers.hpp"

namespace hpdc::nn {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for one parameter tensor.
template <class T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `param` in place.
template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& mom, double lr,
               const AdamSettings& s = {}) {
  require_same(param.shape(), grad.shape(), "adam_step");
  if (mom.m.empty()) {
    mom.m = Tensor<T>(param.shape());
    mom.v = Tensor<T>(param.shape());
  }
  ++mom.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(mom.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(mom.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = s.beta1 * mom.m[i] + (1.0 - s.beta1) * g;
    const double v = s.beta2 * mom.v[i] + (1.0 - s.beta2) * g * g;
    mom.m[i] = static_cast<T>(m);
    mom.v[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - lr * (m / c1) / (std::sqrt(v / c2) + s.eps));
  }
}

template <class T>
class Adam {
 public:
  explicit Adam(AdamSettings s = {}) : settings_(s) {}

  void step(ParamSet<T>& params, double lr) {
    for (auto& e : params.entries()) {
      if (e.var.grad().empty()) continue;
      adam_step(e.var.mutable_value(), e.var.grad(), moments_[e.name], lr, settings_);
    }
  }

  std::unordered_map<std::string, AdamMoments<T>>& moments() { return moments_; }
  const std::unordered_map<std::string, AdamMoments<T>>& moments() const { return moments_; }

 private:
  AdamSettings settings_;
  std::unordered_map<std::string, AdamMoments<T>> moments_;
};

}  // namespace hpdc::nn
