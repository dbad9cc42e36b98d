#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hpdc/nn/autograd.hpp"

namespace hpdc::nn {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  std::string worst;  // "<input>[index]" of the worst entry
};

/// Compares reverse-mode gradients of the scalar `fn` with respect to
/// `inputs` against central differences. At most `samples_per_input` entries
/// of each input are probed (all of them when 0).
///
/// The relative error of an entry is |a - n| / max(|a|, |n|, floor); the
/// floor keeps entries whose true gradient is ~0 from dominating on noise.
inline GradCheckResult grad_check(const std::function<Var<double>()>& fn, std::span<Var<double>> inputs,
                                  double h = 1e-5, std::size_t samples_per_input = 0, std::uint64_t seed = 7,
                                  double floor = 1e-6) {
  for (auto& v : inputs) v.zero_grad();
  Var<double> loss = fn();
  backward(loss);

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Var<double>& in = inputs[k];
    const std::size_t n = in.value().size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (samples_per_input > 0 && samples_per_input < n) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(samples_per_input);
    }
    for (std::size_t i : idx) {
      const double analytic = in.grad().empty() ? 0.0 : in.grad()[i];
      double& x = in.mutable_value()[i];
      const double saved = x;
      double plus, minus;
      {
        NoGradGuard ng;
        x = saved + h;
        plus = fn().item();
        x = saved - h;
        minus = fn().item();
      }
      x = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (rel > res.max_rel_error || res.checked == 0) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        if (rel >= res.max_rel_error) res.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace hpdc::nn
