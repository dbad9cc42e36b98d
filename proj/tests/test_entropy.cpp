#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hpdc/entropy/cdf.hpp"
#include "hpdc/entropy/range_coder.hpp"
#include "hpdc/entropy/stream.hpp"
#include "hpdc/entropy/symbol_coding.hpp"

using namespace hpdc;
using namespace hpdc::entropy;

namespace {

// Floor of one, then floor(p * (2^16 - n)) each, then the leftover counts to
// the largest remainders (lower index first on ties), via a full sort.
std::vector<std::uint32_t> largest_remainder_oracle(const std::vector<double>& pmf) {
  const std::size_t n = pmf.size();
  const double spare = 65536.0 - static_cast<double>(n);
  std::vector<std::uint32_t> count(n);
  std::vector<std::pair<double, std::size_t>> rem(n);
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = pmf[i] / total * spare;
    count[i] = 1 + static_cast<std::uint32_t>(std::floor(share));
    used += count[i];
    rem[i] = {share - std::floor(share), i};
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; used < 65536; ++k, ++used) ++count[rem[k].second];
  return count;
}

std::vector<double> random_pmf(std::mt19937_64& rng, std::size_t n, double power) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(n);
  double total = 0;
  for (auto& v : p) total += (v = std::pow(u(rng), power));
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

TEST(BuildCdf, Examples) {
  EXPECT_EQ(build_cdf(std::vector<double>{0.5, 0.5}).cum, (std::vector<std::uint32_t>{0, 32768, 65536}));
  const auto certain = build_cdf(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(certain.freq(0), 65535u);
  EXPECT_EQ(certain.freq(1), 1u);
  const auto thirds = build_cdf(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_EQ(thirds.freq(0), 21846u);
  EXPECT_EQ(thirds.freq(1), 21845u);
  EXPECT_EQ(thirds.freq(2), 21845u);
}

TEST(BuildCdf, MatchesSortingOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 3000;
    const auto pmf = random_pmf(rng, n, 1 + static_cast<double>(rng() % 6));
    const auto q = build_cdf(pmf);
    const auto oracle = largest_remainder_oracle(pmf);
    ASSERT_EQ(q.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(q.freq(i), oracle[i]) << "symbol " << i;
    EXPECT_EQ(q.cum.back(), kTotal);
  }
}

TEST(BuildCdf, RejectsBadInputs) {
  EXPECT_THROW(build_cdf(std::vector<double>(65281, 1.0 / 65281)), AlphabetError);
  EXPECT_NO_THROW(build_cdf(std::vector<double>(65280, 1.0 / 65280)));
  EXPECT_THROW(build_cdf(std::vector<double>{}), AlphabetError);
  EXPECT_THROW(build_cdf(std::vector<double>{0.5, 0.4}), ArgumentError);
  EXPECT_THROW(build_cdf(std::vector<double>{1.5, -0.5}), ArgumentError);
  EXPECT_THROW(build_cdf(std::vector<double>{std::nan(""), 1.0}), ArgumentError);
}

TEST(RangeCoder, EmptyStreamHasNoBytes) {
  RangeEncoder enc;
  EXPECT_TRUE(enc.finish().empty());
  RangeDecoder dec(std::vector<std::uint8_t>{});
  EXPECT_THROW(dec.peek(kTotal), DecodeError);
}

TEST(RangeCoder, FairBitsCostAboutOneBitEach) {
  std::mt19937_64 rng(2);
  std::vector<std::uint32_t> bits(1000);
  RangeEncoder enc;
  for (auto& b : bits) {
    b = rng() & 1;
    enc.encode(b, 1, 2);
  }
  const auto bytes = enc.finish();
  EXPECT_GE(bytes.size() * 8, 1000u);
  EXPECT_LE(bytes.size() * 8, 1048u);
  RangeDecoder dec(bytes);
  for (auto b : bits) {
    const auto v = dec.peek(2);
    EXPECT_EQ(v, b);
    dec.consume(v, 1);
  }
  EXPECT_TRUE(dec.exhausted());
}

TEST(RangeCoder, LengthWithinBoundOfQuantizedEntropy) {
  std::mt19937_64 rng(3);
  for (double power : {1.0, 4.0, 12.0}) {
    const auto pmf = random_pmf(rng, 64, power);
    const auto q = build_cdf(pmf);
    std::discrete_distribution<std::size_t> pick(pmf.begin(), pmf.end());
    std::vector<std::size_t> syms(20000);
    double ideal = 0;
    RangeEncoder enc;
    for (auto& s : syms) {
      s = pick(rng);
      ideal += 16 - std::log2(static_cast<double>(q.cum[s + 1] - q.cum[s]));
      enc.encode(q, s);
    }
    const auto bytes = enc.finish();
    EXPECT_LE(8.0 * bytes.size(), ideal * 1.015 + 64) << "power " << power;
    RangeDecoder dec(bytes);
    for (auto s : syms) ASSERT_EQ(dec.decode(q), s);
    EXPECT_TRUE(dec.exhausted());
  }
}

TEST(RangeCoder, SkewedTablesWithRareSymbols) {
  std::vector<double> pmf(5, 1e-9);
  pmf[2] = 1 - 4e-9;
  const auto q = build_cdf(pmf);
  std::vector<std::size_t> syms(30000, 2);
  for (std::size_t i = 0; i < syms.size(); i += 997) syms[i] = i % 5;
  RangeEncoder enc;
  for (auto s : syms) enc.encode(q, s);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto s : syms) ASSERT_EQ(dec.decode(q), s);
}

TEST(RangeCoder, TruncatedStreamRaises) {
  const auto q = build_cdf(std::vector<double>(16, 1.0 / 16));
  RangeEncoder enc;
  for (int i = 0; i < 5000; ++i) enc.encode(q, static_cast<std::size_t>(i * 7 % 16));
  auto bytes = enc.finish();
  bytes.resize(bytes.size() / 2);
  RangeDecoder dec(bytes);
  auto drain = [&] {
    for (int i = 0; i < 5000; ++i) dec.decode(q);
  };
  EXPECT_THROW(drain(), DecodeError);
}

TEST(RangeCoder, UniformValuesOfAnyRange) {
  std::mt19937_64 rng(4);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> items;
  RangeEncoder enc;
  for (int i = 0; i < 3000; ++i) {
    const std::uint64_t n = 1 + rng() % (std::uint64_t{1} << (rng() % 40));
    const std::uint64_t v = rng() % n;
    items.push_back({v, n});
    enc.encode_uniform(v, n);
  }
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto [v, n] : items) ASSERT_EQ(dec.decode_uniform(n), v);
}

TEST(SymbolCoding, ParametricTablesWithEscapesRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const std::int64_t lo = -100000, hi = 100000;
  std::vector<std::array<Component, 2>> comps;
  std::vector<std::int64_t> values;
  RangeEncoder enc;
  double estimate = 0;
  int escapes = 0;
  for (int i = 0; i < 5000; ++i) {
    std::array<Component, 2> c{Component{0.7, (u(rng) - 0.5) * 1000, 0.5 + 20 * u(rng)},
                               Component{0.3, (u(rng) - 0.5) * 1000, 0.5 + 5 * u(rng)}};
    std::int64_t v = std::llround(c[0].loc + (u(rng) - 0.5) * 6 * c[0].scale);
    if (i % 50 == 0) v = static_cast<std::int64_t>(rng() % 200001) - 100000;
    const auto t = mixture_table(Family::laplace, c, lo, hi);
    EXPECT_LE(t.whi - t.wlo + 1, kMaxWindow);
    escapes += (v < t.wlo || v > t.whi) ? 1 : 0;
    estimate += table_bits(t, v);
    encode_symbol(enc, t, v);
    comps.push_back(c);
    values.push_back(v);
  }
  EXPECT_GT(escapes, 0);
  const auto bytes = enc.finish();
  EXPECT_LE(8.0 * bytes.size(), estimate * 1.015 + 64);
  RangeDecoder dec(bytes);
  for (std::size_t i = 0; i < values.size(); ++i)
    ASSERT_EQ(decode_symbol(dec, mixture_table(Family::laplace, comps[i], lo, hi)), values[i]);
  EXPECT_TRUE(dec.exhausted());
}

TEST(SymbolCoding, SmallAlphabetUsesWholeRangeWithoutEscapes) {
  const Component c{1.0, 3.0, 0.01};
  const auto t = mixture_table(Family::logistic, {&c, 1}, -2000, 2000);
  EXPECT_EQ(t.wlo, -2000);
  EXPECT_EQ(t.whi, 2000);
  EXPECT_FALSE(t.esc_lo || t.esc_hi);
  EXPECT_EQ(t.symbols, 4001u);
  for (std::uint32_t s = 0; s < t.symbols; ++s) ASSERT_LT(t.cum(s), t.cum(s + 1));
  EXPECT_EQ(t.cum(t.symbols), kTotal);
  const auto single = mixture_table(Family::laplace, {&c, 1}, 7, 7);
  EXPECT_TRUE(single.trivial());
  EXPECT_EQ(table_bits(single, 7), 0.0);
}

TEST(SymbolCoding, ParametricCountsFollowClosedForm) {
  const Component c{1.0, 0.0, 2.0};
  const auto t = mixture_table(Family::laplace, {&c, 1}, -10, 10);
  const double room = 65536.0 - 21;
  for (std::uint32_t s = 1; s < 21; ++s) {
    const double b = -10 - 0.5 + s;
    const double F = b < 0 ? 0.5 * std::exp(b / 2) : 1 - 0.5 * std::exp(-b / 2);
    EXPECT_EQ(t.cum(s), static_cast<std::uint32_t>(std::lround(F * room)) + s);
  }
}

TEST(SymbolCoding, MaterializedTablesRoundTrip) {
  const auto F = [](double t) { return 1.0 / (1.0 + std::exp(-t / 3.0)); };
  const auto t = make_table(F, -500, 500, -40, 40);
  EXPECT_TRUE(t.esc_lo && t.esc_hi);
  const std::vector<std::int64_t> values{-500, -41, -40, 0, 3, 40, 41, 500, 7, -7};
  RangeEncoder enc;
  for (auto v : values) encode_symbol(enc, t, v);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto v : values) EXPECT_EQ(decode_symbol(dec, t), v);
  EXPECT_THROW(encode_symbol(enc, t, 501), ArgumentError);
}

class StreamTest : public ::testing::Test {
 protected:
  CodecStream sample() const {
    CodecStream s;
    s.header.width = 100;
    s.header.height = 30;
    s.header.bit_depth = 18;
    s.header.d = 512;
    s.header.msb_scale = 511;
    s.header.lsb_scale = 511;
    s.header.model_hash[0] = 0xAB;
    s.header.r_min = {-3, -40};
    s.header.r_max = {2, 51};
    s.header.padded_width = 128;
    s.header.padded_height = 64;
    s.header.y_min = -9;
    s.header.y_max = 12;
    s.z_bytes = {1, 2, 3};
    s.y_bytes = {4, 5};
    s.r_bytes = {6, 7, 8, 9};
    return s;
  }
};

TEST_F(StreamTest, RoundTripAndHeaderSize) {
  const auto s = sample();
  const auto bytes = write_stream(s);
  EXPECT_EQ(bytes.size(), kHeaderBytes + 9);
  EXPECT_EQ(kHeaderBytes, 111u);
  EXPECT_EQ(read_stream(bytes), s);
  EXPECT_EQ(s.total_bytes(), bytes.size());
}

TEST_F(StreamTest, BadMagicAndVersionAreFormatErrors) {
  auto bytes = write_stream(sample());
  bytes[0] = 'X';
  EXPECT_THROW(read_stream(bytes), FormatError);
  bytes = write_stream(sample());
  bytes[4] = 9;
  EXPECT_THROW(read_stream(bytes), FormatError);
  EXPECT_THROW(read_stream(std::vector<std::uint8_t>{'H', 'P'}), FormatError);
}

TEST_F(StreamTest, PayloadTamperingIsDecodeError) {
  auto bytes = write_stream(sample());
  bytes.back() ^= 0x10;
  EXPECT_THROW(read_stream(bytes), DecodeError);
  bytes = write_stream(sample());
  bytes.pop_back();
  EXPECT_THROW(read_stream(bytes), DecodeError);
}
