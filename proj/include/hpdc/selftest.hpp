#pragma once

// Quick end-to-end health checks: gradients, split/merge, range coder and
// pmf normalization. Each suite reports pass/fail and its wall time.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpdc/bitsplit.hpp"
#include "hpdc/entropy/cdf.hpp"
#include "hpdc/entropy/range_coder.hpp"
#include "hpdc/entropy/symbol_coding.hpp"
#include "hpdc/likelihood.hpp"
#include "hpdc/nn/factorized_prior.hpp"
#include "hpdc/nn/gradcheck.hpp"
#include "hpdc/nn/layers.hpp"
#include "hpdc/nn/likelihood_ops.hpp"

namespace hpdc {

struct SelftestOptions {
  /// Decoder reads with a table whose first boundary is shifted by one.
  bool inject_cdf_fault = false;
  std::uint64_t seed = 11;
};

struct SuiteResult {
  std::string name;
  bool passed = false;
  double seconds = 0;
  std::string detail;
};

namespace selftest {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

inline nn::Tensor<double> random_tensor(nn::Shape s, std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  nn::Tensor<double> t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

/// Weighted sum of the outputs, so every output element carries a distinct gradient.
inline nn::Var<double> probe(const nn::Var<double>& out, const nn::Tensor<double>& w) {
  return nn::sum(nn::mul(out, nn::Var<double>(w)));
}

inline SuiteResult gradients(std::uint64_t seed) {
  SuiteResult r;
  r.name = "gradients";
  std::mt19937_64 rng(seed);
  nn::Rng init(seed);
  double worst = 0;
  std::string where;
  auto check = [&](const std::string& name, const std::function<nn::Var<double>()>& fn,
                   std::vector<nn::Var<double>> inputs) {
    const auto res = nn::grad_check(fn, inputs, 1e-5, 40, seed);
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      where = name + " " + res.worst;
    }
  };
  {
    nn::ParamSet<double> ps;
    nn::ResidualBlock<double> rb(ps, "rb", 3, init);
    nn::Var<double> x(random_tensor({1, 3, 5, 5}, rng), true);
    const auto w = random_tensor({1, 3, 5, 5}, rng);
    check("residual_block", [&] { return probe(rb(x), w); }, {x, rb.first.weight, rb.second.weight, rb.first.bias});
  }
  {
    nn::ParamSet<double> ps;
    nn::AttentionBlock<double> ab(ps, "ab", 2, init);
    nn::Var<double> x(random_tensor({1, 2, 4, 4}, rng), true);
    const auto w = random_tensor({1, 2, 4, 4}, rng);
    check("attention_block", [&] { return probe(ab(x), w); }, {x, ab.mask_out.weight, ab.trunk_out.weight});
  }
  {
    nn::ParamSet<double> ps;
    nn::Conv2d<double> conv(ps, "c", 2, 3, 3, 2, init);
    nn::SubpixelConv<double> up(ps, "u", 3, 2, 2, init);
    nn::Var<double> x(random_tensor({1, 2, 6, 6}, rng), true);
    const auto w = random_tensor({1, 2, 6, 6}, rng);
    check("conv_subpixel", [&] { return probe(up(conv(x)), w); }, {x, conv.weight, up.conv.weight, conv.bias});
  }
  {
    const int K = 3;
    nn::Var<double> v(random_tensor({1, 2, 3, 3}, rng, 4.0), true);
    nn::Var<double> lg(random_tensor({1, 2 * K, 3, 3}, rng), true);
    nn::Var<double> loc(random_tensor({1, 2 * K, 3, 3}, rng, 3.0), true);
    auto sc_t = random_tensor({1, 2 * K, 3, 3}, rng);
    for (auto& s : sc_t.vec()) s = 0.6 + std::abs(s) * 2;
    nn::Var<double> sc(sc_t, true);
    check("lmm_bits", [&] { return nn::discretized_bits(v, lg, loc, sc, K, Family::laplace); }, {v, lg, loc, sc});
  }
  {
    nn::ParamSet<double> ps;
    nn::FactorizedPrior<double> prior(ps, "p", 2, init);
    nn::Var<double> z(random_tensor({1, 2, 2, 2}, rng, 3.0), true);
    std::vector<nn::Var<double>> inputs{z};
    for (auto& e : ps.entries()) inputs.push_back(e.var);
    check("factorized_prior", [&] { return prior.bits(z); }, inputs);
  }
  r.passed = worst < 1e-4;
  r.detail = "max rel err " + num(worst) + (where.empty() ? "" : " at " + where);
  return r;
}

inline SuiteResult split_merge() {
  SuiteResult r;
  r.name = "split_merge";
  const std::uint32_t ds[] = {8, 64, 256, 512, 1024};
  DepthMap m = DepthMap::zeros(1 << 7, 1 << 7, 14);
  for (std::uint32_t i = 0; i < m.size(); ++i) m.data[i] = i;
  m.recompute_mask();
  std::size_t checked = 0;
  for (std::uint32_t d : ds) {
    if (merge(split(m, d)) != m) {
      r.detail = "mismatch at d=" + std::to_string(d);
      return r;
    }
    checked += m.size();
  }
  r.passed = true;
  r.detail = std::to_string(checked) + " values";
  return r;
}

inline SuiteResult coder(std::uint64_t seed, bool inject_fault) {
  SuiteResult r;
  r.name = "range_coder";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<double> pmf(37);
  double total = 0;
  for (auto& p : pmf) total += (p = std::pow(u(rng), 3.0));
  for (auto& p : pmf) p /= total;
  const auto q = entropy::build_cdf(pmf);
  std::discrete_distribution<std::size_t> pick(pmf.begin(), pmf.end());
  std::vector<std::size_t> symbols(n);
  double ideal = 0;
  entropy::RangeEncoder enc;
  for (auto& s : symbols) {
    s = pick(rng);
    ideal += entropy::quantized_bits(q, s);
    enc.encode(q, s);
  }
  const auto bytes = enc.finish();
  entropy::QuantizedCdf dq = q;
  if (inject_fault) ++dq.cum[1];
  bool ok = true;
  try {
    entropy::RangeDecoder dec(bytes);
    for (std::size_t s : symbols) ok = ok && dec.decode(dq) == s;
    ok = ok && dec.exhausted();
  } catch (const Error&) {
    ok = false;
  }
  const double bits = 8.0 * bytes.size();
  const bool bound = bits <= ideal * 1.015 + 64;

  // Parametric mixture tables share the coder.
  std::vector<Component> comps;
  std::vector<std::int64_t> values;
  entropy::RangeEncoder menc;
  for (int i = 0; i < 2000; ++i) {
    const Component c{1.0, (u(rng) - 0.5) * 40, 0.3 + 10 * u(rng)};
    const auto v = static_cast<std::int64_t>(std::lround(c.loc + (u(rng) - 0.5) * 4 * c.scale));
    const auto clamped = std::clamp<std::int64_t>(v, -30, 30);
    comps.push_back(c);
    values.push_back(clamped);
    entropy::encode_symbol(menc, entropy::mixture_table(Family::laplace, {&comps.back(), 1}, -30, 30), clamped);
  }
  const auto mbytes = menc.finish();
  bool mok = true;
  try {
    entropy::RangeDecoder dec(mbytes);
    for (std::size_t i = 0; i < values.size(); ++i)
      mok = mok && entropy::decode_symbol(dec, entropy::mixture_table(Family::laplace, {&comps[i], 1}, -30, 30)) ==
                       values[i];
    mok = mok && dec.exhausted();
  } catch (const Error&) {
    mok = false;
  }
  r.passed = ok && bound && mok;
  r.detail = std::string(ok ? "round trip ok" : "ROUND TRIP FAILED") + ", " + num(bits) + " bits vs ideal " +
             num(ideal) + (mok ? ", mixture tables ok" : ", MIXTURE ROUND TRIP FAILED");
  return r;
}

inline SuiteResult pmf_normalization(std::uint64_t seed) {
  SuiteResult r;
  r.name = "pmf_normalization";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    Component c[3];
    double wsum = 0;
    for (auto& k : c) {
      k = {u(rng) + 1e-3, (u(rng) - 0.5) * 60, 0.05 + 20 * u(rng)};
      wsum += k.weight;
    }
    for (auto& k : c) k.weight /= wsum;
    const long lo = -20 - static_cast<long>(u(rng) * 20);
    const long hi = 20 + static_cast<long>(u(rng) * 20);
    for (Family f : {Family::laplace, Family::logistic}) {
      double s = 0;
      for (long v = lo; v <= hi; ++v) s += mixture_pmf_folded(f, v, c, lo, hi);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  const Component unit{1.0, 0.0, 1.0};
  const Component wide{1.0, 0.0, 2.0};
  const double p0 = lmm_pmf(0, {&unit, 1});
  const double p3 = lmm_pmf(3, {&wide, 1});
  r.passed = worst < 1e-6 && std::abs(p0 - (1 - std::exp(-0.5))) < 1e-12 &&
             std::abs(p3 - 0.5 * (std::exp(-1.25) - std::exp(-1.75))) < 1e-12;
  r.detail = "max |sum - 1| " + num(worst);
  return r;
}

}  // namespace selftest

/// Runs every suite, printing one line per suite. Returns true iff all pass.
inline bool run_selftest(const SelftestOptions& opt, std::ostream& os, std::vector<SuiteResult>* out = nullptr) {
  std::vector<std::function<SuiteResult()>> suites{
      [&] { return selftest::gradients(opt.seed); },
      [] { return selftest::split_merge(); },
      [&] { return selftest::coder(opt.seed, opt.inject_cdf_fault); },
      [&] { return selftest::pmf_normalization(opt.seed); },
  };
  bool all = true;
  for (auto& suite : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    try {
      r = suite();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    os << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.seconds << " s) " << r.detail << '\n';
    all = all && r.passed;
    if (out) out->push_back(r);
  }
  return all;
}

}  // namespace hpdc
