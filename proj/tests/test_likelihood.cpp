#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hpdc/likelihood.hpp"
#include "hpdc/nn/gradcheck.hpp"
#include "hpdc/nn/likelihood_ops.hpp"

using namespace hpdc;

namespace {

long double cdf_ld(Family f, long double z) {
  switch (f) {
    case Family::laplace:
      return z < 0 ? 0.5L * std::exp(z) : 1.0L - 0.5L * std::exp(-z);
    case Family::logistic:
      return 1.0L / (1.0L + std::exp(-z));
    case Family::gaussian:
      return 0.5L * std::erfc(-z / std::sqrt(2.0L));
  }
  return 0;
}

long double pmf_ld(Family f, long v, const std::vector<Component>& comps) {
  long double p = 0;
  for (const auto& c : comps) {
    const long double a = (v - 0.5L - c.loc) / c.scale, b = (v + 0.5L - c.loc) / c.scale;
    p += c.weight * (cdf_ld(f, b) - cdf_ld(f, a));
  }
  return p;
}

std::vector<Component> random_mixture(std::mt19937_64& rng, int K) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Component> c(K);
  double total = 0;
  for (auto& k : c) {
    k = {u(rng) + 1e-3, (u(rng) - 0.5) * 100, 0.1 + 30 * u(rng)};
    total += k.weight;
  }
  for (auto& k : c) k.weight /= total;
  return c;
}

}  // namespace

TEST(Likelihood, LaplaceSpotValues) {
  const Component unit{1.0, 0.0, 1.0}, wide{1.0, 0.0, 2.0};
  EXPECT_NEAR(lmm_pmf(0, {&unit, 1}), 0.393469, 1e-6);
  EXPECT_NEAR(lmm_pmf(3, {&wide, 1}), 0.0563655, 1e-7);
  EXPECT_NEAR(lmm_pmf(0, {&unit, 1}), 1 - std::exp(-0.5), 1e-15);
}

TEST(Likelihood, GaussianAndLogisticSpotValues) {
  const double pg = discretized_mass(Family::gaussian, 0, 0, 1);
  EXPECT_NEAR(pg, 0.382925, 1e-6);
  EXPECT_NEAR(symbol_bits(pg), -std::log2(0.382925), 1e-5);
  EXPECT_NEAR(symbol_bits(pg), 1.38487, 1e-5);
  const double pl = discretized_mass(Family::logistic, 0, 0, 1);
  EXPECT_NEAR(pl, 0.244918, 1e-6);
  EXPECT_NEAR(symbol_bits(pl), 2.02963, 1e-5);
}

TEST(Likelihood, MatchesLongDoubleOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick_k(1, 3);
  for (int t = 0; t < 10000; ++t) {
    const auto comps = random_mixture(rng, pick_k(rng));
    const long v = std::lround(comps[0].loc + std::normal_distribution<double>(0, 2 * comps[0].scale)(rng));
    for (Family f : {Family::laplace, Family::logistic})
      ASSERT_NEAR(mixture_pmf(f, static_cast<double>(v), comps), static_cast<double>(pmf_ld(f, v, comps)), 1e-9);
  }
}

TEST(Likelihood, FoldedPmfSumsToOne) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    const auto comps = random_mixture(rng, 3);
    const long lo = -60 - static_cast<long>(rng() % 40), hi = 60 + static_cast<long>(rng() % 40);
    for (Family f : {Family::laplace, Family::logistic}) {
      double s = 0;
      for (long v = lo; v <= hi; ++v) s += mixture_pmf_folded(f, v, comps, lo, hi);
      ASSERT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Likelihood, UnfoldedPmfSumsToOneOverWideRange) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto comps = random_mixture(rng, 3);
    double s = 0;
    for (long v = -2000; v <= 2000; ++v) s += lmm_pmf(v, comps);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Likelihood, ComponentOrderDoesNotMatter) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    auto comps = random_mixture(rng, 3);
    const double before = lmm_pmf(7, comps);
    std::reverse(comps.begin(), comps.end());
    EXPECT_NEAR(lmm_pmf(7, comps), before, 1e-15);
  }
}

TEST(Likelihood, ExtremeArgumentsStayFinite) {
  const Component tiny{1.0, 0.0, kMinScale};
  EXPECT_NEAR(lmm_pmf(0, {&tiny, 1}), 1.0, 1e-12);
  EXPECT_EQ(symbol_bits(lmm_pmf(1000, {&tiny, 1})), 16.0);
  const Component huge{1.0, 0.0, 1e12};
  EXPECT_GT(lmm_pmf(0, {&huge, 1}), 0.0);
  EXPECT_TRUE(std::isfinite(symbol_bits(0.0)));
}

TEST(Likelihood, DiscretizedBitsMatchesPmfAndGradients) {
  const int K = 3;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  auto fill = [&](nn::Shape s, double lo, double hi) {
    nn::Tensor<double> t(s);
    for (auto& v : t.vec()) v = lo + (hi - lo) * (u(rng) + 1) / 2;
    return t;
  };
  nn::Tensor<double> vals({1, 2, 3, 3});
  for (auto& v : vals.vec()) v = std::round(4 * u(rng));
  nn::Var<double> v(vals, true), lg(fill({1, 2 * K, 3, 3}, -1, 1), true), loc(fill({1, 2 * K, 3, 3}, -3, 3), true),
      sc(fill({1, 2 * K, 3, 3}, 0.4, 3), true);
  for (Family f : {Family::laplace, Family::logistic}) {
    double oracle = 0;
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
          std::vector<Component> comps(K);
          double total = 0;
          for (int k = 0; k < K; ++k) total += std::exp(lg.value().at(0, c * K + k, y, x));
          for (int k = 0; k < K; ++k)
            comps[k] = {std::exp(lg.value().at(0, c * K + k, y, x)) / total, loc.value().at(0, c * K + k, y, x),
                        sc.value().at(0, c * K + k, y, x)};
          oracle += -std::log2(static_cast<double>(pmf_ld(f, std::lround(vals.at(0, c, y, x)), comps)));
        }
    EXPECT_NEAR(nn::discretized_bits(v, lg, loc, sc, K, f).item(), oracle, 1e-9);
    std::vector<nn::Var<double>> in{v, lg, loc, sc};
    EXPECT_LT(nn::grad_check([&] { return nn::discretized_bits(v, lg, loc, sc, K, f); }, in).max_rel_error, 1e-5);
  }
  nn::Var<double> gl(fill({1, 2, 3, 3}, -3, 3), true), gs(fill({1, 2, 3, 3}, 0.4, 3), true);
  std::vector<nn::Var<double>> gin{gl, gs};
  EXPECT_LT(nn::grad_check([&] { return nn::discretized_bits(v, nn::Var<double>(), gl, gs, 1, Family::gaussian); },
                           gin)
                .max_rel_error,
            1e-5);
}
