#pragma once

// Lossless compression of a DepthMap into a CodecStream and back. Decoding
// order: z_hat -> y prior -> y_hat -> x_tilde -> second lossy pass ->
// mixture field -> residuals. Every network runs a fixed number of times
// per image, before any residual symbol is touched.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hpdc/bitsplit.hpp"
#include "hpdc/depth_io.hpp"
#include "hpdc/entropy/range_coder.hpp"
#include "hpdc/entropy/stream.hpp"
#include "hpdc/entropy/symbol_coding.hpp"
#include "hpdc/model.hpp"
#include "hpdc/residual.hpp"

namespace hpdc {

/// Network invocations during one compress or decompress call.
struct PassCounts {
  int lossy_passes = 0;
  int lossless_passes = 0;
  /// Network calls made while symbols were being coded.
  int calls_while_coding = 0;
  bool coding = false;

  void network_call() {
    if (coding) ++calls_while_coding;
  }
};

struct CodecReport {
  std::size_t pixels = 0;
  std::size_t total_bytes = 0;
  std::size_t z_bytes = 0;
  std::size_t y_bytes = 0;
  std::size_t r_bytes = 0;
  /// Model estimates sum(-log2 max(p, 2^-16)) over the coded symbols.
  double est_z_bits = 0;
  double est_y_bits = 0;
  double est_r_bits = 0;
  PassCounts passes;

  double bpp_total() const { return pixels ? 8.0 * total_bytes / pixels : 0; }
  double bpp_z() const { return pixels ? 8.0 * z_bytes / pixels : 0; }
  double bpp_y() const { return pixels ? 8.0 * y_bytes / pixels : 0; }
  double bpp_r() const { return pixels ? 8.0 * r_bytes / pixels : 0; }
};

/// Everything the decoder can rebuild before reading residuals.
struct Reconstruction {
  nn::Tensor<float> x_tilde;  // (1, 2, Hp, Wp), normalized
  LmmField field;             // H x W
};

namespace detail {

inline constexpr double kLatentLimit = 1 << 30;

inline std::int32_t to_symbol(float v) {
  const double r = std::round(static_cast<double>(v));
  if (!std::isfinite(r) || std::abs(r) >= kLatentLimit) throw DataError("latent value out of codable range");
  return static_cast<std::int32_t>(r);
}

inline nn::Tensor<float> from_symbols(nn::Shape s, const std::vector<std::int32_t>& v) {
  nn::Tensor<float> t(s);
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

/// Coding table of hyper-latent channel c over [lo, hi].
inline entropy::SymbolTable hyper_table(const nn::FactorizedPrior<float>& prior, int c, std::int64_t lo,
                                        std::int64_t hi) {
  auto F = [&](double t) { return prior.cdf(c, t); };
  std::int64_t wlo = lo;
  std::int64_t whi = hi;
  if (hi - lo + 1 > entropy::kMaxWindow) {
    std::int64_t a = lo;
    std::int64_t b = hi;
    while (a < b) {
      const std::int64_t m = a + (b - a) / 2;
      if (F(static_cast<double>(m) + 0.5) < 0.5)
        a = m + 1;
      else
        b = m;
    }
    wlo = std::max(lo, a - entropy::kMaxWindow / 2);
    whi = std::min(hi, wlo + entropy::kMaxWindow - 1);
    wlo = std::max(lo, whi - entropy::kMaxWindow + 1);
  }
  return entropy::make_table(F, lo, hi, wlo, whi);
}

inline double hyper_bits(const nn::FactorizedPrior<float>& prior, int c, std::int64_t v, std::int64_t lo,
                         std::int64_t hi) {
  if (lo == hi) return 0;
  const double a = v <= lo ? 0.0 : prior.cdf(c, static_cast<double>(v) - 0.5);
  const double b = v >= hi ? 1.0 : prior.cdf(c, static_cast<double>(v) + 0.5);
  return symbol_bits(b - a);
}

inline Component gaussian_component(float mean, float scale) {
  return {1.0, static_cast<double>(mean), std::max(static_cast<double>(scale), kMinScale)};
}

}  // namespace detail

/// Runs the lossy synthesis on y_hat, the second lossy pass and the lossless
/// branch; shared verbatim by encoder and decoder.
inline Reconstruction reconstruct(const Model<float>& model, const nn::Tensor<float>& y_hat, const PlaneScales& scales,
                                  int width, int height, PassCounts& passes) {
  nn::NoGradGuard ng;
  const auto& lossy = model.lossy();
  passes.network_call();
  ++passes.lossy_passes;
  const nn::Var<float> x_tilde = lossy.synthesis(nn::Var<float>(y_hat));
  passes.network_call();
  ++passes.lossy_passes;
  const nn::Var<float> r_est = pseudo_residual(lossy, x_tilde, QuantMode::infer, nullptr);
  passes.network_call();
  ++passes.lossless_passes;
  const auto vars = model.lossless().forward(x_tilde, r_est, scales);
  Reconstruction out;
  out.field = lmm_field(vars, model.config().K, model.config().mixture, width, height);
  out.x_tilde = x_tilde.value();
  return out;
}

class Codec {
 public:
  explicit Codec(const Model<float>& model) : model_(model), hash_(model_hash(model)) {}

  const entropy::ModelHash& hash() const { return hash_; }

  std::vector<std::uint8_t> compress(const DepthMap& map, std::uint32_t d, CodecReport* report = nullptr) const {
    return entropy::write_stream(encode(map, d, report));
  }

  entropy::CodecStream encode(const DepthMap& map, std::uint32_t d, CodecReport* report = nullptr) const {
    map.validate();
    if (map.width > 0xFFFF || map.height > 0xFFFF || map.width == 0 || map.height == 0)
      throw ArgumentError("map dimensions must be in [1, 65535]");
    if (d < 2) throw ArgumentError("split divisor d must be >= 2");
    CodecReport rep;
    PassCounts& passes = rep.passes;
    const int w = static_cast<int>(map.width);
    const int h = static_cast<int>(map.height);
    const int wp = nn::round_up(w, kHyperStride);
    const int hp = nn::round_up(h, kHyperStride);
    const SplitPlanes planes = split(map, d);
    const PlaneScales scales = PlaneScales::for_split(map.bit_depth, d);

    std::vector<std::int32_t> z_sym, y_sym;
    nn::Shape z_shape, y_shape;
    nn::Tensor<float> z_hat, y_hat;
    HyperPrior<float> prior;
    {
      nn::NoGradGuard ng;
      const auto& lossy = model_.lossy();
      const nn::Var<float> x(nn::pad_edge(pack_normalized<float>(planes), hp, wp));
      passes.network_call();
      const auto y = lossy.analysis(x);
      const auto z = lossy.hyper_analysis(y);
      y_shape = y.shape();
      z_shape = z.shape();
      for (float v : z.value().vec()) z_sym.push_back(detail::to_symbol(v));
      for (float v : y.value().vec()) y_sym.push_back(detail::to_symbol(v));
      z_hat = detail::from_symbols(z_shape, z_sym);
      y_hat = detail::from_symbols(y_shape, y_sym);
      prior = lossy.hyper_synthesis(nn::Var<float>(z_hat));
    }
    const Reconstruction rec = reconstruct(model_, y_hat, scales, w, h, passes);
    const ResidualPlane res = compute_residual(planes, rec.x_tilde);

    entropy::CodecStream s;
    auto& hd = s.header;
    hd.width = static_cast<std::uint16_t>(w);
    hd.height = static_cast<std::uint16_t>(h);
    hd.bit_depth = static_cast<std::uint8_t>(map.bit_depth);
    hd.d = d;
    hd.precision = map.precision_um;
    hd.msb_scale = scales.msb;
    hd.lsb_scale = scales.lsb;
    hd.model_hash = hash_;
    hd.r_min = res.r_min;
    hd.r_max = res.r_max;
    hd.padded_width = static_cast<std::uint16_t>(wp);
    hd.padded_height = static_cast<std::uint16_t>(hp);
    hd.z_min = *std::min_element(z_sym.begin(), z_sym.end());
    hd.z_max = *std::max_element(z_sym.begin(), z_sym.end());
    hd.y_min = *std::min_element(y_sym.begin(), y_sym.end());
    hd.y_max = *std::max_element(y_sym.begin(), y_sym.end());

    passes.coding = true;
    const auto& fp = model_.lossy().prior();
    {
      entropy::RangeEncoder enc;
      const std::size_t plane = z_shape.plane();
      for (int c = 0; c < z_shape.c; ++c) {
        const auto table = detail::hyper_table(fp, c, hd.z_min, hd.z_max);
        for (std::size_t i = 0; i < plane; ++i) {
          const std::int32_t v = z_sym[c * plane + i];
          entropy::encode_symbol(enc, table, v);
          rep.est_z_bits += detail::hyper_bits(fp, c, v, hd.z_min, hd.z_max);
        }
      }
      s.z_bytes = enc.finish();
    }
    {
      entropy::RangeEncoder enc;
      for (std::size_t i = 0; i < y_sym.size(); ++i) {
        const Component g = detail::gaussian_component(prior.mean.value()[i], prior.scale.value()[i]);
        entropy::encode_symbol(enc, entropy::mixture_table(Family::gaussian, {&g, 1}, hd.y_min, hd.y_max), y_sym[i]);
        rep.est_y_bits += symbol_bits(mixture_pmf_folded(Family::gaussian, y_sym[i], {&g, 1}, hd.y_min, hd.y_max));
      }
      s.y_bytes = enc.finish();
    }
    {
      entropy::RangeEncoder enc;
      const Family fam = rec.field.family;
      for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < res.r[c].size(); ++i) {
          const auto comps = rec.field.at(c, i);
          const std::int32_t v = res.r[c][i];
          entropy::encode_symbol(enc, entropy::mixture_table(fam, comps, res.r_min[c], res.r_max[c]), v);
          rep.est_r_bits += symbol_bits(mixture_pmf_folded(fam, v, comps, res.r_min[c], res.r_max[c]));
        }
      s.r_bytes = enc.finish();
    }
    passes.coding = false;

    rep.pixels = map.size();
    rep.z_bytes = s.z_bytes.size();
    rep.y_bytes = s.y_bytes.size();
    rep.r_bytes = s.r_bytes.size();
    rep.total_bytes = s.total_bytes();
    if (report) *report = rep;
    return s;
  }

  DepthMap decompress(std::span<const std::uint8_t> bytes, CodecReport* report = nullptr) const {
    return decode(entropy::read_stream(bytes), report);
  }

  DepthMap decode(const entropy::CodecStream& s, CodecReport* report = nullptr) const {
    const auto& hd = s.header;
    if (hd.model_hash != hash_)
      throw FormatError("checkpoint hash mismatch: stream was written with model " +
                        entropy::hash_hex(hd.model_hash) + ", loaded model is " + entropy::hash_hex(hash_));
    const PlaneScales scales = PlaneScales::for_split(hd.bit_depth, hd.d);
    if (scales.msb != hd.msb_scale || scales.lsb != hd.lsb_scale)
      throw FormatError("stream normalization scales do not match B and d");
    const int w = hd.width;
    const int h = hd.height;
    const int wp = hd.padded_width;
    const int hp = hd.padded_height;
    if (wp != nn::round_up(w, kHyperStride) || hp != nn::round_up(h, kHyperStride))
      throw FormatError("stream padded size is inconsistent");
    CodecReport rep;
    PassCounts& passes = rep.passes;
    const int n_lat = model_.config().lossy_channels;
    const nn::Shape z_shape{1, n_lat, hp / kHyperStride, wp / kHyperStride};
    const nn::Shape y_shape{1, n_lat, hp / kLatentStride, wp / kLatentStride};
    const auto& fp = model_.lossy().prior();

    std::vector<std::int32_t> z_sym(z_shape.numel());
    {
      passes.coding = true;
      entropy::RangeDecoder dec(s.z_bytes);
      const std::size_t plane = z_shape.plane();
      for (int c = 0; c < z_shape.c; ++c) {
        const auto table = detail::hyper_table(fp, c, hd.z_min, hd.z_max);
        for (std::size_t i = 0; i < plane; ++i)
          z_sym[c * plane + i] = static_cast<std::int32_t>(entropy::decode_symbol(dec, table));
      }
      if (!dec.exhausted()) throw DecodeError("trailing bytes in hyper-latent substream");
      passes.coding = false;
    }
    HyperPrior<float> prior;
    {
      nn::NoGradGuard ng;
      passes.network_call();
      prior = model_.lossy().hyper_synthesis(nn::Var<float>(detail::from_symbols(z_shape, z_sym)));
    }
    if (!(prior.mean.shape() == y_shape)) throw FormatError("latent shape mismatch");
    std::vector<std::int32_t> y_sym(y_shape.numel());
    {
      passes.coding = true;
      entropy::RangeDecoder dec(s.y_bytes);
      for (std::size_t i = 0; i < y_sym.size(); ++i) {
        const Component g = detail::gaussian_component(prior.mean.value()[i], prior.scale.value()[i]);
        y_sym[i] = static_cast<std::int32_t>(
            entropy::decode_symbol(dec, entropy::mixture_table(Family::gaussian, {&g, 1}, hd.y_min, hd.y_max)));
      }
      if (!dec.exhausted()) throw DecodeError("trailing bytes in latent substream");
      passes.coding = false;
    }
    const Reconstruction rec = reconstruct(model_, detail::from_symbols(y_shape, y_sym), scales, w, h, passes);

    ResidualPlane res;
    res.width = w;
    res.height = h;
    res.r_min = hd.r_min;
    res.r_max = hd.r_max;
    {
      passes.coding = true;
      entropy::RangeDecoder dec(s.r_bytes);
      const Family fam = rec.field.family;
      const std::size_t n = static_cast<std::size_t>(w) * h;
      for (int c = 0; c < 2; ++c) {
        res.r[c].resize(n);
        for (std::size_t i = 0; i < n; ++i)
          res.r[c][i] = static_cast<std::int32_t>(
              entropy::decode_symbol(dec, entropy::mixture_table(fam, rec.field.at(c, i), hd.r_min[c], hd.r_max[c])));
      }
      if (!dec.exhausted()) throw DecodeError("trailing bytes in residual substream");
      passes.coding = false;
    }
    const SplitPlanes planes = apply_residual(res, rec.x_tilde, hd.bit_depth, hd.d);
    DepthMap out = merge(planes, hd.precision);

    rep.pixels = out.size();
    rep.z_bytes = s.z_bytes.size();
    rep.y_bytes = s.y_bytes.size();
    rep.r_bytes = s.r_bytes.size();
    rep.total_bytes = s.total_bytes();
    if (report) *report = rep;
    return out;
  }

 private:
  const Model<float>& model_;
  entropy::ModelHash hash_;
};

}  // namespace hpdc
