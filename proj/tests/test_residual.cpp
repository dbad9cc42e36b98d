#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hpdc/nn/gradcheck.hpp"
#include "hpdc/residual.hpp"

using namespace hpdc;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

SplitPlanes single(std::uint32_t msb, std::uint32_t lsb, int bits, std::uint32_t d) {
  SplitPlanes p;
  p.width = p.height = 1;
  p.d = d;
  p.bit_depth = bits;
  p.msb = {msb};
  p.lsb = {lsb};
  return p;
}

}  // namespace

TEST(Residual, ExampleResidual) {
  // d = 2^10 at B = 18 gives an MSB scale of 255, so 97.3 / 255 predicts 97.
  const auto p = single(100, 0, 18, 1024);
  Tensor<float> xt({1, 2, 1, 1});
  xt[0] = static_cast<float>(97.3 / 255.0);
  const auto r = compute_residual(p, xt);
  EXPECT_EQ(r.r[0][0], 3);
  EXPECT_EQ(r.r[1][0], 0);
}

TEST(Residual, PredictionClampsToLevelRange) {
  EXPECT_EQ(predict_level(-0.2, 100, 100), 0);
  EXPECT_EQ(predict_level(1.7, 100, 100), 100);
  EXPECT_EQ(predict_level(std::nan(""), 100, 100), 0);
  EXPECT_EQ(predict_level(0.505, 100, 100), 51);
}

TEST(Residual, ApplyInvertsComputeExhaustively) {
  const int bits = 10;
  const std::uint32_t d = 8;
  const auto top = plane_max_levels(bits, d);
  SplitPlanes p;
  p.width = top[0] + 1;
  p.height = d;
  p.d = d;
  p.bit_depth = bits;
  for (std::uint32_t l = 0; l < d; ++l)
    for (std::uint32_t m = 0; m <= top[0]; ++m) {
      p.msb.push_back(m);
      p.lsb.push_back(l);
    }
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto xt = random_tensor({1, 2, static_cast<int>(p.height) + 3, static_cast<int>(p.width) + 5}, seed, -0.3,
                                  1.3)
                        .cast<float>();
    const auto r = compute_residual(p, xt);
    EXPECT_EQ(apply_residual(r, xt, bits, d), p);
    for (int c = 0; c < 2; ++c)
      EXPECT_EQ(*std::minmax_element(r.r[c].begin(), r.r[c].end()).first, r.r_min[c]);
  }
  auto r = compute_residual(p, Tensor<float>({1, 2, static_cast<int>(p.height), static_cast<int>(p.width)}));
  r.r[1][0] = -1;
  EXPECT_THROW(apply_residual(r, Tensor<float>({1, 2, static_cast<int>(p.height), static_cast<int>(p.width)}), bits, d),
               DecodeError);
}

class LosslessNetTest : public ::testing::Test {
 protected:
  static constexpr int kChannels = 3;
  static constexpr int K = 3;
  nn::ParamSet<double> ps;
  nn::Rng rng{4};
  LosslessNet<double> gated{ps, kChannels, K, Fusion::gated, rng};
};

TEST_F(LosslessNetTest, ZeroWeightsGiveUniformWeightsAndPlaneScales) {
  ps.fill(0.0);
  const PlaneScales scales{255, 1023};
  const Var<double> x(random_tensor({1, 2, 8, 8}, 5)), r(random_tensor({1, 2, 8, 8}, 6));
  const auto v = gated.forward(x, r, scales);
  const auto f = lmm_field(v, K, Family::laplace, 8, 8);
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 64; ++i)
      for (const auto& comp : f.at(c, i)) {
        EXPECT_DOUBLE_EQ(comp.weight, 1.0 / 3.0);
        EXPECT_EQ(comp.loc, 0.0);
        EXPECT_EQ(comp.scale, c == 0 ? 255.0 : 1023.0);
      }
}

TEST_F(LosslessNetTest, GateSaturationSelectsBranches) {
  const Var<double> fp(random_tensor({1, kChannels, 8, 8}, 7)), fl(random_tensor({1, kChannels, 8, 8}, 8));
  const Var<double> fp2(random_tensor({1, kChannels, 8, 8}, 9));
  auto& gate_bias = ps.find("lossless.fuse.gate.bias")->mutable_value();
  ps.find("lossless.fuse.gate.weight")->mutable_value().fill(0.0);

  gate_bias.fill(-1e4);
  EXPECT_EQ(gated.fuse(fp, fl).value(), gated.fuse(fp2, fl).value());

  gate_bias.fill(1e4);
  ps.find("lossless.fuse.add.weight")->mutable_value().fill(0.0);
  for (auto& e : ps.entries())
    if (e.name.rfind("lossless.fuse.res", 0) == 0) e.var.mutable_value().fill(0.0);
  EXPECT_EQ(gated.fuse(fp, fl).value(), fp.value());
}

TEST_F(LosslessNetTest, MixtureWeightsNormalizeAndScalesArePositive) {
  for (auto& e : ps.entries())
    if (e.name.find(".out.") != std::string::npos)
      for (auto& v : e.var.mutable_value().vec()) v *= 300;
  const auto v = gated.forward(Var<double>(random_tensor({1, 2, 8, 8}, 10)), Var<double>(random_tensor({1, 2, 8, 8}, 11)),
                               PlaneScales{7, 511});
  const auto f = lmm_field(v, K, Family::laplace, 8, 8);
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 64; ++i) {
      double s = 0;
      for (const auto& comp : f.at(c, i)) {
        s += comp.weight;
        EXPECT_GE(comp.scale, kMinScale);
        EXPECT_TRUE(std::isfinite(comp.loc));
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST_F(LosslessNetTest, ConcatFusionAndShapes) {
  nn::ParamSet<double> ps2;
  LosslessNet<double> cat(ps2, kChannels, 2, Fusion::concat, rng);
  EXPECT_NE(ps2.find("lossless.fuse.cat.weight"), nullptr);
  EXPECT_EQ(ps2.find("lossless.fuse.gate.weight"), nullptr);
  const auto v = cat.forward(Var<double>(random_tensor({1, 2, 12, 8}, 12)), Var<double>(random_tensor({1, 2, 12, 8}, 13)),
                             PlaneScales{3, 3});
  EXPECT_EQ(v.loc.shape(), (Shape{1, 4, 12, 8}));
  EXPECT_THROW(cat.preprocess_lossy(Var<double>(Tensor<double>({1, 2, 6, 8}))), ShapeError);
}

TEST_F(LosslessNetTest, GradientsThroughBranch) {
  // Undo the small head init so upstream gradients sit well above rounding noise.
  for (auto& e : ps.entries())
    if (e.name.rfind("lossless.head.", 0) == 0 && e.name.ends_with(".out.weight"))
      for (auto& v : e.var.mutable_value().vec()) v /= kHeadInitGain;
  Var<double> x(random_tensor({1, 2, 8, 8}, 14), true), r(random_tensor({1, 2, 8, 8}, 15, -0.1, 0.1), true);
  Tensor<double> vals({1, 2, 8, 8});
  std::mt19937_64 g(16);
  for (auto& v : vals.vec()) v = static_cast<double>(static_cast<int>(g() % 9) - 4);
  const Var<double> values(vals);
  const PlaneScales scales{3, 7};
  auto fn = [&] {
    const auto v = gated.forward(x, r, scales);
    return nn::discretized_bits(values, v.logits, v.loc, v.scale, K, Family::laplace);
  };
  std::vector<Var<double>> in{x, r};
  for (const char* name : {"lossless.pseudo.in.weight", "lossless.unet.down1.weight", "lossless.unet.merge0.weight",
                           "lossless.fuse.gate.weight", "lossless.fuse.add.bias", "lossless.head.weight.out.weight",
                           "lossless.head.loc.out.weight", "lossless.head.scale.out.bias"})
    in.push_back(*ps.find(name));
  // Larger steps cross leaky-ReLU kinks; the floor absorbs rounding noise on near-zero entries.
  const auto res = nn::grad_check(fn, in, 1e-5, 10, 5, 1e-3);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(PseudoResidual, IsReconstructionMinusSecondPass) {
  nn::ParamSet<double> ps;
  nn::Rng rng(17);
  LossyNet<double> net(ps, 2, rng);
  const Var<double> xt(random_tensor({1, 2, 64, 64}, 18, 0, 1));
  const auto r = pseudo_residual(net, xt, QuantMode::infer, nullptr);
  const auto c = net.reconstruct(xt, QuantMode::infer, nullptr).value();
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(r.value()[i], xt.value()[i] - c[i]);
}
