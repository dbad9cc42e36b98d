#pragma once

// Quotient/remainder split of a high-bit-depth map into MSB and LSB planes.

#include <cstdint>
#include <string>
#include <vector>

#include "hpdc/depth_io.hpp"
#include "hpdc/errors.hpp"
#include "hpdc/nn/tensor.hpp"

namespace hpdc {

struct SplitPlanes {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t d = 2;
  int bit_depth = 16;
  std::vector<std::uint32_t> msb;
  std::vector<std::uint32_t> lsb;

  /// Largest MSB level floor((2^B - 1) / d).
  std::uint32_t msb_max() const { return msb_levels(bit_depth, d); }

  static std::uint32_t msb_levels(int bits, std::uint32_t divisor) {
    return static_cast<std::uint32_t>(((std::uint64_t{1} << bits) - 1) / divisor);
  }

  void validate() const {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (d < 2) throw DataError("split divisor must be >= 2");
    if (msb.size() != n || lsb.size() != n) throw DataError("plane sizes do not match dimensions");
    const std::uint32_t top = msb_max();
    for (std::size_t i = 0; i < n; ++i) {
      if (lsb[i] >= d) throw DataError("lsb " + std::to_string(lsb[i]) + " >= d");
      if (msb[i] > top) throw DataError("msb " + std::to_string(msb[i]) + " exceeds floor((2^B-1)/d)");
    }
  }

  friend bool operator==(const SplitPlanes&, const SplitPlanes&) = default;
};

/// Divisors used to map each plane into [0, 1]: (max msb level or 1, d - 1).
struct PlaneScales {
  std::uint32_t msb = 1;
  std::uint32_t lsb = 1;

  static PlaneScales for_split(int bits, std::uint32_t d) {
    const std::uint32_t m = SplitPlanes::msb_levels(bits, d);
    return {m == 0 ? 1u : m, d - 1};
  }
  std::uint32_t operator[](int channel) const { return channel == 0 ? msb : lsb; }
  friend bool operator==(const PlaneScales&, const PlaneScales&) = default;
};

inline SplitPlanes split(const DepthMap& map, std::uint32_t d) {
  if (d < 2) throw ArgumentError("split divisor d must be >= 2");
  SplitPlanes p;
  p.width = map.width;
  p.height = map.height;
  p.d = d;
  p.bit_depth = map.bit_depth;
  p.msb.resize(map.size());
  p.lsb.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    p.msb[i] = map.data[i] / d;
    p.lsb[i] = map.data[i] % d;
  }
  return p;
}

inline DepthMap merge(const SplitPlanes& planes, std::uint32_t precision_um = 1000) {
  planes.validate();
  DepthMap m = DepthMap::zeros(planes.width, planes.height, planes.bit_depth, precision_um);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::uint64_t v = std::uint64_t{planes.msb[i]} * planes.d + planes.lsb[i];
    if (v > m.max_value()) throw DataError("merged value exceeds 2^B - 1");
    m.data[i] = static_cast<std::uint32_t>(v);
  }
  m.recompute_mask();
  return m;
}

/// Two-channel network input (1, 2, H, W) with both planes scaled into [0, 1].
template <class T = float>
nn::Tensor<T> pack_normalized(const SplitPlanes& planes) {
  const PlaneScales s = PlaneScales::for_split(planes.bit_depth, planes.d);
  nn::Tensor<T> x({1, 2, static_cast<int>(planes.height), static_cast<int>(planes.width)});
  T* c0 = x.plane(0, 0);
  T* c1 = x.plane(0, 1);
  for (std::size_t i = 0; i < planes.msb.size(); ++i) {
    c0[i] = static_cast<T>(planes.msb[i]) / static_cast<T>(s.msb);
    c1[i] = static_cast<T>(planes.lsb[i]) / static_cast<T>(s.lsb);
  }
  return x;
}

}  // namespace hpdc
