#pragma once

// Probability tables quantized to a 16-bit total for the range coder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "hpdc/errors.hpp"

namespace hpdc::entropy {

inline constexpr int kPrecisionBits = 16;
inline constexpr std::uint32_t kTotal = 1u << kPrecisionBits;
/// Symbols kept free of the alphabet so every table has headroom.
inline constexpr std::uint32_t kAlphabetGuard = 256;
inline constexpr std::size_t kMaxAlphabet = kTotal - kAlphabetGuard;

/// Cumulative counts c_0 = 0 < c_1 < ... < c_S = 65536.
struct QuantizedCdf {
  std::vector<std::uint32_t> cum;

  std::size_t size() const { return cum.empty() ? 0 : cum.size() - 1; }
  std::uint32_t freq(std::size_t s) const { return cum[s + 1] - cum[s]; }

  /// Symbol whose interval contains `target`.
  std::size_t find(std::uint32_t target) const {
    auto it = std::upper_bound(cum.begin(), cum.end(), target);
    return static_cast<std::size_t>(it - cum.begin()) - 1;
  }

  friend bool operator==(const QuantizedCdf&, const QuantizedCdf&) = default;
};

/// Largest-remainder quantization with a floor of one count per symbol.
/// Ties among remainders go to the lower symbol index.
inline QuantizedCdf build_cdf(std::span<const double> pmf) {
  const std::size_t n = pmf.size();
  if (n == 0) throw AlphabetError("empty alphabet");
  if (n > kMaxAlphabet) throw AlphabetError("alphabet of " + std::to_string(n) + " symbols exceeds the table limit");
  double total = 0;
  for (double p : pmf) {
    if (!(p >= 0) || !std::isfinite(p)) throw ArgumentError("probabilities must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-4) throw ArgumentError("probabilities must sum to 1");

  const double spare = static_cast<double>(kTotal - n);
  std::vector<std::uint32_t> count(n, 1);
  std::vector<double> remainder(n);
  std::uint64_t used = n;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = pmf[i] / total * spare;
    const double whole = std::floor(share);
    count[i] += static_cast<std::uint32_t>(whole);
    used += static_cast<std::uint64_t>(whole);
    remainder[i] = share - whole;
  }
  if (used > kTotal) throw ArgumentError("probability quantization overflow");
  std::size_t left = kTotal - used;
  if (left > 0) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    auto before = [&](std::uint32_t a, std::uint32_t b) {
      return remainder[a] != remainder[b] ? remainder[a] > remainder[b] : a < b;
    };
    left = std::min(left, n);
    std::nth_element(order.begin(), order.begin() + (left - 1), order.end(), before);
    for (std::size_t i = 0; i < left; ++i) ++count[order[i]];
  }
  QuantizedCdf q;
  q.cum.resize(n + 1);
  q.cum[0] = 0;
  for (std::size_t i = 0; i < n; ++i) q.cum[i + 1] = q.cum[i] + count[i];
  if (q.cum[n] != kTotal) {
    // Floating drift: put the difference on the most probable symbol.
    const auto top = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
    const std::int64_t diff = static_cast<std::int64_t>(kTotal) - q.cum[n];
    count[top] = static_cast<std::uint32_t>(count[top] + diff);
    for (std::size_t i = 0; i < n; ++i) q.cum[i + 1] = q.cum[i] + count[i];
  }
  return q;
}

/// Ideal code length of symbol s under a quantized table, in bits.
inline double quantized_bits(const QuantizedCdf& q, std::size_t s) {
  return kPrecisionBits - std::log2(static_cast<double>(q.freq(s)));
}

}  // namespace hpdc::entropy
