#pragma once

// Discretized likelihoods of integer symbols: p(v) = F(v + 1/2) - F(v - 1/2)
// for Laplace, logistic and Gaussian families and their mixtures, evaluated
// in log space so that far-tail symbols keep finite rates and gradients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hpdc/errors.hpp"

namespace hpdc {

enum class Family { laplace, logistic, gaussian };

inline Family parse_family(const std::string& s) {
  if (s == "laplace") return Family::laplace;
  if (s == "logistic") return Family::logistic;
  if (s == "gaussian") return Family::gaussian;
  throw ArgumentError("unknown distribution family '" + s + "'");
}

inline const char* family_name(Family f) {
  switch (f) {
    case Family::laplace: return "laplace";
    case Family::logistic: return "logistic";
    case Family::gaussian: return "gaussian";
  }
  return "?";
}

/// Lower bound applied to symbol probabilities when computing coded rates.
inline constexpr double kProbFloor = 1.0 / 65536.0;
inline constexpr double kMinScale = 1e-6;
inline constexpr int kMaxMixture = 16;

namespace dist {

inline constexpr double kLn2 = std::numbers::ln2;
inline constexpr double kLogMin = -745.0;

/// log(1 - exp(x)) for x <= 0.
inline double log1mexp(double x) {
  if (x >= 0) return -std::numeric_limits<double>::infinity();
  return x > -kLn2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

/// Standardized CDF.
inline double cdf(Family f, double z) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  switch (f) {
    case Family::laplace: return z < 0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
    case Family::logistic: return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    case Family::gaussian: return 0.5 * std::erfc(-z / std::numbers::sqrt2);
  }
  return 0;
}

inline double log_cdf(Family f, double z) {
  if (z == std::numeric_limits<double>::infinity()) return 0.0;
  if (z == -std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  switch (f) {
    case Family::laplace: return z < 0 ? z - kLn2 : std::log1p(-0.5 * std::exp(-z));
    case Family::logistic: return log_sigmoid(z);
    case Family::gaussian: {
      if (z > 0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
      if (z > -37) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
      const double z2 = z * z;
      return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2 * std::numbers::pi) + std::log1p(-1 / z2 + 3 / (z2 * z2));
    }
  }
  return 0;
}

/// Standardized log density.
inline double log_pdf(Family f, double z) {
  if (std::isinf(z)) return -std::numeric_limits<double>::infinity();
  const double a = std::abs(z);
  switch (f) {
    case Family::laplace: return -a - kLn2;
    case Family::logistic: return -a - 2 * std::log1p(std::exp(-a));
    case Family::gaussian: return -0.5 * z * z - 0.5 * std::log(2 * std::numbers::pi);
  }
  return 0;
}

/// log(F(zb) - F(za)) for za < 0 < zb.
inline double log_middle_mass(Family f, double za, double zb) {
  switch (f) {
    case Family::laplace: {
      const double lo = std::isinf(za) ? -1.0 : std::expm1(za);
      const double hi = std::isinf(zb) ? -1.0 : std::expm1(-zb);
      return std::log(-0.5 * lo - 0.5 * hi);
    }
    case Family::logistic: {
      if (std::isinf(za) || std::isinf(zb)) return std::log(cdf(f, zb) - cdf(f, za));
      auto log_cosh = [](double x) {
        const double a = std::abs(x);
        return a + std::log1p(std::exp(-2 * a)) - kLn2;
      };
      const double h = 0.5 * (zb - za);
      const double log_sinh = h + log1mexp(-2 * h) - kLn2;
      return log_sinh - kLn2 - log_cosh(0.5 * za) - log_cosh(0.5 * zb);
    }
    case Family::gaussian: {
      const double a = std::isinf(za) ? -1.0 : std::erf(za / std::numbers::sqrt2);
      const double b = std::isinf(zb) ? 1.0 : std::erf(zb / std::numbers::sqrt2);
      return std::log(0.5 * (b - a));
    }
  }
  return 0;
}

/// log P(za < Z < zb) of a standardized symmetric variable, za < zb.
inline double log_interval(Family f, double za, double zb) {
  double lp;
  if (zb <= 0) {
    const double lb = log_cdf(f, zb);
    lp = lb + log1mexp(log_cdf(f, za) - lb);
  } else if (za >= 0) {
    const double la = log_cdf(f, -za);
    lp = la + log1mexp(log_cdf(f, -zb) - la);
  } else {
    lp = log_middle_mass(f, za, zb);
  }
  return std::isfinite(lp) ? lp : (lp > 0 ? 0.0 : kLogMin);
}

/// Interval log mass plus d(log p)/dza and d(log p)/dzb.
struct IntervalGrad {
  double log_p = 0;
  double d_za = 0;
  double d_zb = 0;
};

inline IntervalGrad log_interval_grad(Family f, double za, double zb) {
  IntervalGrad g;
  g.log_p = log_interval(f, za, zb);
  if (g.log_p <= kLogMin) return g;
  g.d_zb = std::exp(log_pdf(f, zb) - g.log_p);
  g.d_za = -std::exp(log_pdf(f, za) - g.log_p);
  return g;
}

}  // namespace dist

/// One mixture component in symbol units.
struct Component {
  double weight = 1;
  double loc = 0;
  double scale = 1;
};

/// Probability mass of integer symbol v under one component.
inline double discretized_mass(Family f, double v, double loc, double scale) {
  const double za = (v - 0.5 - loc) / scale;
  const double zb = (v + 0.5 - loc) / scale;
  return std::exp(dist::log_interval(f, za, zb));
}

/// sum_k w_k (F_k(v + 1/2) - F_k(v - 1/2)).
inline double mixture_pmf(Family f, double v, std::span<const Component> comps) {
  double p = 0;
  for (const auto& c : comps) p += c.weight * discretized_mass(f, v, c.loc, c.scale);
  return p;
}

/// Mixture pmf over the finite alphabet [lo, hi]; mass below lo (above hi)
/// is folded into lo (hi).
inline double mixture_pmf_folded(Family f, long v, std::span<const Component> comps, long lo, long hi) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double p = 0;
  for (const auto& c : comps) {
    const double za = v <= lo ? -inf : (v - 0.5 - c.loc) / c.scale;
    const double zb = v >= hi ? inf : (v + 0.5 - c.loc) / c.scale;
    p += c.weight * (za == -inf && zb == inf ? 1.0 : std::exp(dist::log_interval(f, za, zb)));
  }
  return p;
}

/// Laplace mixture pmf of an integer residual.
inline double lmm_pmf(long r, std::span<const Component> comps) {
  return mixture_pmf(Family::laplace, static_cast<double>(r), comps);
}

/// -log2(max(p, floor)).
inline double symbol_bits(double p) { return -std::log2(std::max(p, kProbFloor)); }

}  // namespace hpdc
