#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hpdc/depth_io.hpp"

using namespace hpdc;

namespace {

std::vector<std::uint8_t> hpdm_bytes(std::uint16_t w, std::uint16_t h, std::uint8_t bits, std::uint8_t word,
                                     const std::vector<std::uint32_t>& values) {
  std::vector<std::uint8_t> b{'H', 'P', 'D', 'M'};
  b.push_back(static_cast<std::uint8_t>(w & 0xFF));
  b.push_back(static_cast<std::uint8_t>(w >> 8));
  b.push_back(static_cast<std::uint8_t>(h & 0xFF));
  b.push_back(static_cast<std::uint8_t>(h >> 8));
  b.push_back(bits);
  b.push_back(word);
  b.push_back(0);
  b.push_back(0);
  for (std::uint32_t v : values)
    for (int i = 0; i < word; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  return b;
}

DepthMap random_map(std::uint32_t w, std::uint32_t h, int bits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DepthMap m = DepthMap::zeros(w, h, bits);
  std::uniform_int_distribution<std::uint32_t> value(0, m.max_value());
  for (auto& v : m.data) v = rng() % 5 == 0 ? 0 : value(rng);
  m.recompute_mask();
  return m;
}

// Row/column of a point under the range-image projection, computed directly.
std::pair<int, int> cell_of(double x, double y, double z, int rows, int cols, double up_deg, double down_deg) {
  const double pi = std::numbers::pi;
  const double up = up_deg * pi / 180, down = down_deg * pi / 180;
  const double elev = std::atan2(z, std::sqrt(x * x + y * y));
  int col = static_cast<int>(std::floor((0.5 - std::atan2(y, x) / (2 * pi)) * cols)) % cols;
  int row = static_cast<int>(std::floor((up - elev) / (up - down) * rows));
  return {std::clamp(row, 0, rows - 1), (col + cols) % cols};
}

}  // namespace

TEST(DepthIo, Raw16ExampleDecodesWithMask) {
  const auto bytes = hpdm_bytes(2, 2, 16, 2, {100, 0, 7, 65535});
  const DepthMap m = decode_depth(bytes, DepthFormat::raw16);
  EXPECT_EQ(m.width, 2u);
  EXPECT_EQ(m.height, 2u);
  EXPECT_EQ(m.data, (std::vector<std::uint32_t>{100, 0, 7, 65535}));
  EXPECT_EQ(m.mask, (std::vector<std::uint8_t>{1, 0, 1, 1}));
}

TEST(DepthIo, Pgm16ExampleDecodesAllValid) {
  std::string header = "P5\n2 2\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint8_t v : {1, 2, 3, 4}) {
    bytes.push_back(0);
    bytes.push_back(v);
  }
  const DepthMap m = decode_depth(bytes, DepthFormat::pgm16);
  EXPECT_EQ(m.data, (std::vector<std::uint32_t>{1, 2, 3, 4}));
  EXPECT_EQ(m.mask, (std::vector<std::uint8_t>{1, 1, 1, 1}));
  EXPECT_EQ(m.bit_depth, 16);
}

TEST(DepthIo, ValueAboveDeclaredBitDepthIsRangeError) {
  const auto bytes = hpdm_bytes(1, 1, 12, 2, {5000});
  EXPECT_THROW(decode_depth(bytes, DepthFormat::raw16), RangeError);
}

TEST(DepthIo, MalformedHeadersAreFormatErrors) {
  auto bytes = hpdm_bytes(2, 2, 16, 2, {1, 2, 3, 4});
  bytes[0] = 'X';
  EXPECT_THROW(decode_depth(bytes, DepthFormat::raw16), FormatError);
  auto short_payload = hpdm_bytes(2, 2, 16, 2, {1, 2, 3});
  EXPECT_THROW(decode_depth(short_payload, DepthFormat::raw16), FormatError);
  auto wrong_word = hpdm_bytes(1, 1, 16, 4, {1});
  EXPECT_THROW(decode_depth(wrong_word, DepthFormat::raw16), FormatError);
  const std::string pgm = "P5\n2 x\n255\n";
  EXPECT_THROW(decode_depth(std::vector<std::uint8_t>(pgm.begin(), pgm.end()), DepthFormat::pgm16), FormatError);
}

TEST(DepthIo, SaveLoadRoundTripsEveryFormat) {
  for (int bits : {8, 12, 16}) {
    const DepthMap m = random_map(37, 11, bits, bits);
    for (DepthFormat f : {DepthFormat::raw16, DepthFormat::raw32, DepthFormat::pgm16}) {
      const DepthMap back = decode_depth(encode_depth(m, f), f);
      EXPECT_EQ(back.data, m.data);
      EXPECT_EQ(back.mask, m.mask);
      EXPECT_EQ(back.width, m.width);
    }
  }
  const DepthMap wide = random_map(13, 9, 24, 3);
  EXPECT_EQ(decode_depth(encode_depth(wide, DepthFormat::raw32), DepthFormat::raw32), wide);
  EXPECT_THROW(encode_depth(wide, DepthFormat::raw16), RangeError);
  EXPECT_THROW(encode_depth(wide, DepthFormat::pgm16), RangeError);
}

TEST(DepthIo, DetectsFormatFromMagic) {
  const DepthMap m = random_map(4, 4, 18, 1);
  EXPECT_EQ(detect_depth_format(encode_depth(m, DepthFormat::raw32)), DepthFormat::raw32);
  const DepthMap n = random_map(4, 4, 16, 1);
  EXPECT_EQ(detect_depth_format(encode_depth(n, DepthFormat::raw16)), DepthFormat::raw16);
  EXPECT_EQ(detect_depth_format(encode_depth(n, DepthFormat::pgm16)), DepthFormat::pgm16);
}

TEST(DepthIo, ProjectsForwardPointToExpectedCell) {
  ProjectionConfig cfg;
  const std::vector<Point3> pts{{10, 0, 0}};
  const DepthMap m = project_pointcloud(pts, cfg, 1000, 18);
  const auto [row, col] = cell_of(10, 0, 0, 64, 2048, 2.0, -24.8);
  EXPECT_EQ(row, 4);
  EXPECT_EQ(col, 1024);
  EXPECT_EQ(m.at(4, 1024), 10000u);
  EXPECT_EQ(std::count(m.mask.begin(), m.mask.end(), 1), 1);
}

TEST(DepthIo, NearerPointWinsCollision) {
  ProjectionConfig cfg;
  const std::vector<Point3> pts{{5, 0, 0}, {3, 0, 0}};
  const DepthMap m = project_pointcloud(pts, cfg, 1000, 18);
  EXPECT_EQ(m.at(4, 1024), 3000u);
  const std::vector<Point3> reversed{{3, 0, 0}, {5, 0, 0}};
  EXPECT_EQ(project_pointcloud(reversed, cfg, 1000, 18).at(4, 1024), 3000u);
}

TEST(DepthIo, ElevationAboveFieldOfViewClampsToRowZero) {
  ProjectionConfig cfg;
  const std::vector<Point3> pts{{1, 0, 5}};
  const DepthMap m = project_pointcloud(pts, cfg, 1000, 18);
  const auto [row, col] = cell_of(1, 0, 5, 64, 2048, 2.0, -24.8);
  EXPECT_EQ(row, 0);
  EXPECT_NE(m.at(0, static_cast<std::uint32_t>(col)), 0u);
}

TEST(DepthIo, ProjectionOfRandomCloudIsConsistent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-60, 60);
  std::vector<Point3> pts(5000);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng) / 10};
  ProjectionConfig cfg;
  const DepthMap m = project_pointcloud(pts, cfg, 1000, 18);
  EXPECT_NO_THROW(m.validate());
  for (const auto& p : pts) {
    const double depth = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (depth > cfg.max_range) continue;
    const auto [row, col] = cell_of(p.x, p.y, p.z, 64, 2048, 2.0, -24.8);
    EXPECT_LE(m.at(row, col), quantize(depth, 1000, 18));
  }
  const DepthMap empty = project_pointcloud({}, cfg);
  EXPECT_EQ(std::count(empty.mask.begin(), empty.mask.end(), 1), 0);
}

TEST(DepthIo, MedianFillOddCount) {
  DepthMap m = DepthMap::zeros(3, 3, 16);
  m.at(0, 0) = 4;
  m.at(0, 2) = 6;
  m.at(2, 1) = 8;
  m.recompute_mask();
  EXPECT_EQ(median_fill(m, 3).at(1, 1), 6u);
}

TEST(DepthIo, MedianFillEvenCountTakesLowerMiddle) {
  DepthMap m = DepthMap::zeros(3, 3, 16);
  m.at(0, 1) = 7;
  m.at(2, 2) = 5;
  m.recompute_mask();
  std::vector<std::uint32_t> neighbours{7, 5};
  std::sort(neighbours.begin(), neighbours.end());
  const auto oracle = neighbours[(neighbours.size() - 1) / 2];
  EXPECT_EQ(median_fill(m, 3).at(1, 1), oracle);
  EXPECT_EQ(oracle, 5u);
}

TEST(DepthIo, MedianFillMatchesSortOracleOnRandomMaps) {
  const DepthMap m = random_map(20, 15, 16, 9);
  const DepthMap f = median_fill(m, 5);
  for (std::uint32_t r = 0; r < m.height; ++r)
    for (std::uint32_t c = 0; c < m.width; ++c) {
      if (m.mask[r * m.width + c]) {
        EXPECT_EQ(f.at(r, c), m.at(r, c));
        continue;
      }
      std::vector<std::uint32_t> vals;
      for (int dr = -2; dr <= 2; ++dr)
        for (int dc = -2; dc <= 2; ++dc) {
          const int rr = static_cast<int>(r) + dr, cc = static_cast<int>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= 15 || cc >= 20) continue;
          if (m.mask[rr * 20 + cc]) vals.push_back(m.at(rr, cc));
        }
      std::sort(vals.begin(), vals.end());
      EXPECT_EQ(f.at(r, c), vals.empty() ? 0u : vals[(vals.size() - 1) / 2]);
    }
}

TEST(DepthIo, MedianFillLeavesIsolatedHoleAndIsIdempotentOnFullMaps) {
  DepthMap m = DepthMap::zeros(5, 5, 16);
  m.at(4, 4) = 9;
  m.recompute_mask();
  EXPECT_EQ(median_fill(m, 3).at(0, 0), 0u);
  EXPECT_EQ(median_fill(m, 3).mask[0], 0);
  DepthMap full = DepthMap::zeros(4, 4, 16);
  for (auto& v : full.data) v = 3;
  full.recompute_mask();
  EXPECT_EQ(median_fill(full, 3), full);
  EXPECT_THROW(median_fill(m, 4), ArgumentError);
  EXPECT_THROW(median_fill(m, 1), ArgumentError);
}

TEST(DepthIo, QuantizeRoundsHalfAwayAndChecksRange) {
  EXPECT_EQ(quantize(1.2345, 1000), 1235u);
  EXPECT_EQ(quantize(0.5999, 1000), 600u);
  EXPECT_EQ(quantize(350.0, 1000, 19), 350000u);
  EXPECT_THROW(quantize(350.0, 1000, 18), RangeError);
  EXPECT_THROW(quantize(-1.0, 1000), ArgumentError);
}

TEST(DepthIo, ValidateRejectsBrokenInvariants) {
  DepthMap m = DepthMap::zeros(2, 2, 12);
  m.data[0] = 4096;
  m.mask[0] = 1;
  EXPECT_THROW(m.validate(), RangeError);
  m.data[0] = 5;
  m.mask[0] = 0;
  EXPECT_THROW(m.validate(), DataError);
}
