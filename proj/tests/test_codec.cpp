#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <string>

#include "hpdc/codec.hpp"
#include "hpdc/trainer.hpp"

using namespace hpdc;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.lossy_channels = 4;
  c.lossless_channels = 4;
  return c;
}

DepthMap noisy_map(std::uint32_t w, std::uint32_t h, int bits, std::uint64_t seed, double hole_rate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  DepthMap m = DepthMap::zeros(w, h, bits);
  for (auto& v : m.data) v = u(rng) < hole_rate ? 0 : static_cast<std::uint32_t>(rng() % (m.max_value() + 1ull));
  m.recompute_mask();
  return m;
}

class CodecTest : public ::testing::Test {
 protected:
  Model<float> model{tiny_config(), 21};
  Codec codec{model};
};

}  // namespace

TEST_F(CodecTest, RoundTripsAcrossBitDepthsAndShapes) {
  int i = 0;
  for (int bits : {12, 16, 18}) {
    for (auto [w, h] : {std::pair{37u, 70u}, std::pair{1u, 1u}, std::pair{130u, 65u}}) {
      const auto seed = static_cast<std::uint64_t>(++i);
      for (const DepthMap& m : {noisy_map(w, h, bits, seed, 0.2), synthetic_depth(w, h, bits, seed)}) {
        for (std::uint32_t d : {8u, 512u}) {
          CodecReport rep;
          const auto bytes = codec.compress(m, d, &rep);
          ASSERT_EQ(codec.decompress(bytes), m) << "B=" << bits << " " << w << "x" << h << " d=" << d;
          EXPECT_EQ(rep.total_bytes, bytes.size());
        }
      }
    }
  }
}

TEST_F(CodecTest, AllInvalidMapIsTiny) {
  const DepthMap zero = DepthMap::zeros(64, 64, 16);
  const auto bytes = codec.compress(zero, 512);
  EXPECT_LT(bytes.size(), 200u);
  EXPECT_EQ(codec.decompress(bytes), zero);
}

TEST_F(CodecTest, FullRangeExtremesRoundTrip) {
  DepthMap m = DepthMap::zeros(70, 3, 24);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = i % 2 ? m.max_value() : 1;
  m.recompute_mask();
  EXPECT_EQ(codec.decompress(codec.compress(m, 1024)), m);
  EXPECT_EQ(codec.decompress(codec.compress(m, 2)), m);
}

TEST_F(CodecTest, OutputIsDeterministic) {
  const DepthMap m = synthetic_depth(96, 40, 16, 3);
  const auto a = codec.compress(m, 256);
  EXPECT_EQ(codec.compress(m, 256), a);
  Model<float> twin(tiny_config(), 21);
  EXPECT_EQ(Codec(twin).compress(m, 256), a);
}

TEST_F(CodecTest, NetworksRunAFixedNumberOfTimes) {
  const DepthMap m = synthetic_depth(128, 64, 18, 4);
  CodecReport enc, dec;
  const auto bytes = codec.compress(m, 512, &enc);
  codec.decompress(bytes, &dec);
  for (const auto& r : {enc, dec}) {
    EXPECT_EQ(r.passes.lossy_passes, 2);
    EXPECT_EQ(r.passes.lossless_passes, 1);
    EXPECT_EQ(r.passes.calls_while_coding, 0);
  }
}

TEST_F(CodecTest, DivisorComesFromHeader) {
  const DepthMap m = synthetic_depth(64, 64, 16, 5);
  const auto bytes = codec.compress(m, 64);
  EXPECT_EQ(entropy::read_stream(bytes).header.d, 64u);
  EXPECT_EQ(codec.decompress(bytes), m);
}

TEST_F(CodecTest, ForeignModelIsFormatError) {
  const auto bytes = codec.compress(synthetic_depth(64, 64, 16, 6), 512);
  Model<float> other(tiny_config(), 22);
  EXPECT_THROW(Codec(other).decompress(bytes), FormatError);
}

TEST_F(CodecTest, DamagedStreamsAreRejected) {
  const auto bytes = codec.compress(synthetic_depth(64, 64, 16, 7), 512);
  auto flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  EXPECT_THROW(codec.decompress(flipped), DecodeError);
  auto cut = bytes;
  cut.resize(cut.size() - 5);
  EXPECT_THROW(codec.decompress(cut), DecodeError);
  auto bad = bytes;
  bad[2] = 'X';
  EXPECT_THROW(codec.decompress(bad), FormatError);

  // A consistent checksum over a damaged payload still never yields silent success.
  auto s = entropy::read_stream(bytes);
  s.r_bytes.push_back(0);
  EXPECT_THROW(codec.decode(s), DecodeError);
}

TEST_F(CodecTest, CodedLengthsTrackModelEstimates) {
  for (std::uint64_t seed = 8; seed < 11; ++seed) {
    CodecReport rep;
    codec.compress(synthetic_depth(128, 64, 18, seed), 512, &rep);
    EXPECT_LE(8.0 * rep.r_bytes, rep.est_r_bits * 1.015 + 64);
    EXPECT_GE(8.0 * rep.r_bytes, rep.est_r_bits * 0.985 - 64);
    EXPECT_LE(8.0 * rep.y_bytes, rep.est_y_bits * 1.015 + 64);
    EXPECT_LE(8.0 * rep.z_bytes, rep.est_z_bits * 1.015 + 64);
  }
}

TEST_F(CodecTest, EvaluationReportColumns) {
  std::vector<std::pair<std::string, DepthMap>> maps{{"a", synthetic_depth(64, 64, 16, 12)},
                                                     {"b", noisy_map(30, 20, 16, 13, 0.1)}};
  const auto rep = evaluate(model, maps, 512, 1);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& row : rep.rows) {
    const auto& r = row.report;
    EXPECT_DOUBLE_EQ(r.bpp_total(), 8.0 * r.total_bytes / r.pixels);
    EXPECT_GE(r.bpp_total(), r.bpp_y() + r.bpp_z() + r.bpp_r());
  }
  std::ostringstream os;
  write_eval_report(os, rep);
  std::istringstream is(os.str());
  std::string header, line, last;
  std::getline(is, header);
  for (const char* col : {"R_y", "R_z", "R_lossless", "overall"}) EXPECT_NE(header.find(col), std::string::npos);
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(last.rfind("mean,", 0), 0u);
}

TEST_F(CodecTest, RejectsInvalidInputs) {
  DepthMap m = DepthMap::zeros(4, 4, 12);
  m.data[0] = 5000;
  m.mask[0] = 1;
  EXPECT_THROW(codec.compress(m, 512), RangeError);
  EXPECT_THROW(codec.compress(DepthMap::zeros(4, 4, 12), 1), ArgumentError);
}
