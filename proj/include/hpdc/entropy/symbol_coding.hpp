#pragma once

// Per-symbol coding tables over a bounded integer alphabet [lo, hi].
// Mass outside [lo, hi] is folded into the edge symbols. Static tables are
// materialized with build_cdf; per-pixel mixture tables are parametric. Wide alphabets are
// coded through a window around the density's bulk; values outside the
// window are sent as an escape symbol (carrying the window's tail mass)
// followed by a uniform offset.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hpdc/entropy/cdf.hpp"
#include "hpdc/entropy/range_coder.hpp"
#include "hpdc/likelihood.hpp"

namespace hpdc::entropy {

inline constexpr std::int64_t kMaxWindow = 4096;

/// Half-width of the coding window in units of the component scale.
inline double window_spread(Family f) { return f == Family::gaussian ? 9.0 : 18.0; }

struct SymbolTable {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t wlo = 0;
  std::int64_t whi = 0;
  bool esc_lo = false;
  bool esc_hi = false;
  QuantizedCdf cdf;

  bool trivial() const { return lo == hi; }
  std::size_t offset() const { return esc_lo ? 1 : 0; }
};

/// Table for window [wlo, whi] of alphabet [lo, hi] from a CDF `F` over the
/// real line; symbol v covers (v - 1/2, v + 1/2].
template <class Cdf>
SymbolTable make_table(Cdf&& F, std::int64_t lo, std::int64_t hi, std::int64_t wlo, std::int64_t whi) {
  if (lo > hi || wlo < lo || whi > hi || wlo > whi) throw ArgumentError("invalid coding window");
  SymbolTable t;
  t.lo = lo;
  t.hi = hi;
  t.wlo = wlo;
  t.whi = whi;
  if (lo == hi) return t;
  t.esc_lo = wlo > lo;
  t.esc_hi = whi < hi;
  const std::size_t width = static_cast<std::size_t>(whi - wlo + 1);
  // Boundaries between consecutive coded symbols, padded with 0 and 1.
  std::vector<double> edge(width + 1);
  for (std::size_t j = 0; j <= width; ++j) edge[j] = F(static_cast<double>(wlo) - 0.5 + static_cast<double>(j));
  if (!t.esc_lo) edge[0] = 0.0;
  if (!t.esc_hi) edge[width] = 1.0;
  for (std::size_t j = 1; j <= width; ++j) edge[j] = std::max(edge[j], edge[j - 1]);
  std::vector<double> pmf;
  pmf.reserve(width + 2);
  if (t.esc_lo) pmf.push_back(std::max(edge[0], 0.0));
  for (std::size_t j = 0; j < width; ++j) pmf.push_back(edge[j + 1] - edge[j]);
  if (t.esc_hi) pmf.push_back(std::max(1.0 - edge[width], 0.0));
  double total = 0;
  for (double p : pmf) total += p;
  if (!(total > 0) || !std::isfinite(total)) {
    std::fill(pmf.begin(), pmf.end(), 1.0);
    total = static_cast<double>(pmf.size());
  }
  for (double& p : pmf) p /= total;
  t.cdf = build_cdf(pmf);
  return t;
}

namespace detail {

inline std::int64_t clamp_level(double v, std::int64_t lo, std::int64_t hi) {
  if (std::isnan(v)) return lo;
  if (v <= static_cast<double>(lo)) return lo;
  if (v >= static_cast<double>(hi)) return hi;
  return static_cast<std::int64_t>(v);
}

inline Component sane(const Component& c) {
  Component s = c;
  if (!std::isfinite(s.weight) || s.weight < 0) s.weight = 0;
  if (!std::isfinite(s.loc)) s.loc = 0;
  if (!std::isfinite(s.scale) || s.scale < kMinScale) s.scale = std::isfinite(s.scale) ? kMinScale : 1.0;
  return s;
}

/// The whole alphabet when it fits in kMaxWindow; otherwise a window covering
/// every component's bulk, clipped to the alphabet and, when still wider than
/// kMaxWindow, re-centred on the heaviest component.
inline std::pair<std::int64_t, std::int64_t> mixture_window(Family f, std::span<const Component> comps,
                                                            std::int64_t lo, std::int64_t hi) {
  if (hi - lo + 1 <= kMaxWindow) return {lo, hi};
  const double spread = window_spread(f);
  double a = std::numeric_limits<double>::infinity();
  double b = -std::numeric_limits<double>::infinity();
  double best_w = -1;
  double centre = 0;
  for (const auto& raw : comps) {
    const Component c = sane(raw);
    if (c.weight > best_w) {
      best_w = c.weight;
      centre = c.loc;
    }
    if (c.weight < 1e-9) continue;
    a = std::min(a, std::floor(c.loc - spread * c.scale));
    b = std::max(b, std::ceil(c.loc + spread * c.scale));
  }
  if (!(a <= b)) a = b = centre;
  std::int64_t wlo = clamp_level(a, lo, hi);
  std::int64_t whi = clamp_level(b, lo, hi);
  if (whi - wlo + 1 > kMaxWindow) {
    const std::int64_t mid = clamp_level(std::round(centre), lo, hi);
    wlo = std::max(lo, mid - kMaxWindow / 2);
    whi = std::min(hi, wlo + kMaxWindow - 1);
    wlo = std::max(lo, whi - kMaxWindow + 1);
  }
  return {wlo, whi};
}

}  // namespace detail

/// Mixture CDF over the real line with sanitized components.
struct MixtureCdf {
  Family family = Family::laplace;
  std::array<Component, kMaxMixture> comps{};
  std::size_t k = 0;

  double operator()(double t) const {
    double p = 0;
    for (std::size_t i = 0; i < k; ++i) p += comps[i].weight * dist::cdf(family, (t - comps[i].loc) / comps[i].scale);
    return p;
  }
};

/// Table whose cumulative counts are evaluated on demand from a CDF:
/// cum(s) = round(F(b_s) * (2^16 - S)) + s, with b_s the boundary below
/// symbol s and S the number of coded symbols. Every symbol keeps at least
/// one count and no table is materialized, so coding costs O(1) CDF
/// evaluations per symbol (O(log S) when decoding).
template <class Cdf>
struct ParametricTable {
  Cdf F;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t wlo = 0;
  std::int64_t whi = 0;
  bool esc_lo = false;
  bool esc_hi = false;
  std::uint32_t symbols = 1;

  bool trivial() const { return lo == hi; }
  std::size_t offset() const { return esc_lo ? 1 : 0; }

  std::uint32_t cum(std::uint32_t s) const {
    if (s == 0) return 0;
    if (s >= symbols) return kTotal;
    const double t = static_cast<double>(wlo) - 0.5 + static_cast<double>(s - offset());
    double p = F(t);
    if (!(p > 0)) p = 0;
    if (p > 1) p = 1;
    const std::uint32_t room = kTotal - symbols;
    return static_cast<std::uint32_t>(std::lround(p * room)) + s;
  }

  /// Coded symbol index of level v inside the window.
  std::uint32_t index(std::int64_t v) const { return static_cast<std::uint32_t>(offset() + (v - wlo)); }
};

template <class Cdf>
ParametricTable<Cdf> parametric_table(Cdf F, std::int64_t lo, std::int64_t hi, std::int64_t wlo, std::int64_t whi) {
  if (lo > hi || wlo < lo || whi > hi || wlo > whi) throw ArgumentError("invalid coding window");
  ParametricTable<Cdf> t{std::move(F), lo, hi, wlo, whi};
  if (lo == hi) return t;
  t.esc_lo = wlo > lo;
  t.esc_hi = whi < hi;
  const std::int64_t n = whi - wlo + 1 + (t.esc_lo ? 1 : 0) + (t.esc_hi ? 1 : 0);
  if (n > static_cast<std::int64_t>(kMaxAlphabet)) throw AlphabetError("coding window too wide");
  t.symbols = static_cast<std::uint32_t>(n);
  return t;
}

/// Table for a mixture of one family over alphabet [lo, hi].
inline ParametricTable<MixtureCdf> mixture_table(Family f, std::span<const Component> comps, std::int64_t lo,
                                                 std::int64_t hi) {
  MixtureCdf F;
  F.family = f;
  F.k = std::min(comps.size(), F.comps.size());
  for (std::size_t i = 0; i < F.k; ++i) F.comps[i] = detail::sane(comps[i]);
  if (lo == hi) return parametric_table(F, lo, hi, lo, hi);
  const auto [wlo, whi] = detail::mixture_window(f, std::span<const Component>(F.comps.data(), F.k), lo, hi);
  return parametric_table(F, lo, hi, wlo, whi);
}

template <class Cdf>
double table_bits(const ParametricTable<Cdf>& t, std::int64_t v) {
  if (t.trivial()) return 0;
  auto bits = [&](std::uint32_t s) { return kPrecisionBits - std::log2(static_cast<double>(t.cum(s + 1) - t.cum(s))); };
  if (v < t.wlo) return bits(0) + std::log2(static_cast<double>(t.wlo - t.lo));
  if (v > t.whi) return bits(t.symbols - 1) + std::log2(static_cast<double>(t.hi - t.whi));
  return bits(t.index(v));
}

template <class Cdf>
void encode_symbol(RangeEncoder& enc, const ParametricTable<Cdf>& t, std::int64_t v) {
  if (v < t.lo || v > t.hi) throw ArgumentError("symbol outside its alphabet");
  if (t.trivial()) return;
  auto put = [&](std::uint32_t s) {
    const std::uint32_t a = t.cum(s);
    const std::uint32_t b = t.cum(s + 1);
    if (b <= a) throw ArgumentError("non-monotone coding table");
    enc.encode(a, b - a, kTotal);
  };
  if (v < t.wlo) {
    put(0);
    enc.encode_uniform(static_cast<std::uint64_t>(v - t.lo), static_cast<std::uint64_t>(t.wlo - t.lo));
  } else if (v > t.whi) {
    put(t.symbols - 1);
    enc.encode_uniform(static_cast<std::uint64_t>(v - t.whi - 1), static_cast<std::uint64_t>(t.hi - t.whi));
  } else {
    put(t.index(v));
  }
}

template <class Cdf>
std::int64_t decode_symbol(RangeDecoder& dec, const ParametricTable<Cdf>& t) {
  if (t.trivial()) return t.lo;
  const std::uint32_t target = dec.peek(kTotal);
  std::uint32_t a = 0;
  std::uint32_t b = t.symbols;
  while (b - a > 1) {
    const std::uint32_t m = a + (b - a) / 2;
    if (t.cum(m) <= target)
      a = m;
    else
      b = m;
  }
  const std::uint32_t lo_cum = t.cum(a);
  const std::uint32_t hi_cum = t.cum(a + 1);
  if (hi_cum <= lo_cum || target < lo_cum || target >= hi_cum) throw DecodeError("corrupt range-coded data");
  dec.consume(lo_cum, hi_cum - lo_cum);
  if (t.esc_lo && a == 0)
    return t.lo + static_cast<std::int64_t>(dec.decode_uniform(static_cast<std::uint64_t>(t.wlo - t.lo)));
  if (t.esc_hi && a == t.symbols - 1)
    return t.whi + 1 + static_cast<std::int64_t>(dec.decode_uniform(static_cast<std::uint64_t>(t.hi - t.whi)));
  return t.wlo + static_cast<std::int64_t>(a - t.offset());
}

/// Exact cost of coding `v` with table `t`, in bits.
inline double table_bits(const SymbolTable& t, std::int64_t v) {
  if (t.trivial()) return 0;
  if (v < t.wlo) return quantized_bits(t.cdf, 0) + std::log2(static_cast<double>(t.wlo - t.lo));
  if (v > t.whi) return quantized_bits(t.cdf, t.cdf.size() - 1) + std::log2(static_cast<double>(t.hi - t.whi));
  return quantized_bits(t.cdf, t.offset() + static_cast<std::size_t>(v - t.wlo));
}

inline void encode_symbol(RangeEncoder& enc, const SymbolTable& t, std::int64_t v) {
  if (v < t.lo || v > t.hi) throw ArgumentError("symbol outside its alphabet");
  if (t.trivial()) return;
  if (v < t.wlo) {
    enc.encode(t.cdf, 0);
    enc.encode_uniform(static_cast<std::uint64_t>(v - t.lo), static_cast<std::uint64_t>(t.wlo - t.lo));
  } else if (v > t.whi) {
    enc.encode(t.cdf, t.cdf.size() - 1);
    enc.encode_uniform(static_cast<std::uint64_t>(v - t.whi - 1), static_cast<std::uint64_t>(t.hi - t.whi));
  } else {
    enc.encode(t.cdf, t.offset() + static_cast<std::size_t>(v - t.wlo));
  }
}

inline std::int64_t decode_symbol(RangeDecoder& dec, const SymbolTable& t) {
  if (t.trivial()) return t.lo;
  const std::size_t s = dec.decode(t.cdf);
  if (t.esc_lo && s == 0)
    return t.lo + static_cast<std::int64_t>(dec.decode_uniform(static_cast<std::uint64_t>(t.wlo - t.lo)));
  if (t.esc_hi && s == t.cdf.size() - 1)
    return t.whi + 1 + static_cast<std::int64_t>(dec.decode_uniform(static_cast<std::uint64_t>(t.hi - t.whi)));
  return t.wlo + static_cast<std::int64_t>(s - t.offset());
}

}  // namespace hpdc::entropy
