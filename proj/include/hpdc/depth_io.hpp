#pragma once

// Depth map container, raw/PGM persistence, LiDAR range-image projection and
// hole filling.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hpdc/bytes.hpp"
#include "hpdc/errors.hpp"

namespace hpdc {

inline constexpr int kMinBitDepth = 8;
inline constexpr int kMaxBitDepth = 24;

/// Integer depth grid. Zero is the invalid sentinel; `mask` mirrors it.
struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int bit_depth = 16;
  std::uint32_t precision_um = 1000;  // micrometers per unit
  std::vector<std::uint32_t> data;
  std::vector<std::uint8_t> mask;

  static DepthMap zeros(std::uint32_t w, std::uint32_t h, int bits, std::uint32_t precision = 1000) {
    DepthMap m;
    m.width = w;
    m.height = h;
    m.bit_depth = bits;
    m.precision_um = precision;
    m.data.assign(static_cast<std::size_t>(w) * h, 0);
    m.mask.assign(static_cast<std::size_t>(w) * h, 0);
    return m;
  }

  std::size_t size() const { return data.size(); }
  std::uint32_t max_value() const { return static_cast<std::uint32_t>((std::uint64_t{1} << bit_depth) - 1); }
  std::uint32_t& at(std::uint32_t row, std::uint32_t col) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint32_t at(std::uint32_t row, std::uint32_t col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  void recompute_mask() {
    mask.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) mask[i] = data[i] != 0 ? 1 : 0;
  }

  /// Throws RangeError/DataError if any invariant is broken.
  void validate() const {
    if (bit_depth < kMinBitDepth || bit_depth > kMaxBitDepth)
      throw RangeError("bit depth " + std::to_string(bit_depth) + " outside [8, 24]");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (data.size() != n || mask.size() != n) throw DataError("depth map buffers do not match dimensions");
    const std::uint32_t limit = max_value();
    for (std::size_t i = 0; i < n; ++i) {
      if (data[i] > limit)
        throw RangeError("value " + std::to_string(data[i]) + " >= 2^" + std::to_string(bit_depth));
      if ((data[i] != 0) != (mask[i] != 0)) throw DataError("mask disagrees with zero sentinel");
    }
  }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

enum class DepthFormat { raw16, raw32, pgm16 };

inline DepthFormat parse_depth_format(const std::string& name) {
  if (name == "raw16") return DepthFormat::raw16;
  if (name == "raw32") return DepthFormat::raw32;
  if (name == "pgm16" || name == "pgm") return DepthFormat::pgm16;
  throw ArgumentError("unknown depth format '" + name + "'");
}

namespace detail {

inline void check_range(std::uint32_t v, int bits) {
  if (bits < 32 && v >= (std::uint32_t{1} << bits))
    throw RangeError("value " + std::to_string(v) + " >= 2^" + std::to_string(bits));
}

inline std::uint64_t pgm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("malformed PGM header");
  std::uint64_t v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 0xFFFFFFFFull) throw FormatError("PGM header value overflow");
    ++pos;
  }
  return v;
}

}  // namespace detail

// HPDM: "HPDM", u16 width, u16 height, u8 bit depth, u8 word size, u16 reserved,
// then row-major little-endian words.
inline std::vector<std::uint8_t> encode_hpdm(const DepthMap& m, int word_size) {
  if (word_size != 2 && word_size != 4) throw ArgumentError("HPDM word size must be 2 or 4");
  if (m.width > 0xFFFF || m.height > 0xFFFF) throw RangeError("HPDM dimensions exceed 65535");
  if (word_size == 2 && m.bit_depth > 16) throw RangeError("raw16 cannot hold bit depth > 16");
  m.validate();
  ByteWriter w;
  w.text("HPDM");
  w.u16(static_cast<std::uint16_t>(m.width));
  w.u16(static_cast<std::uint16_t>(m.height));
  w.u8(static_cast<std::uint8_t>(m.bit_depth));
  w.u8(static_cast<std::uint8_t>(word_size));
  w.u16(0);
  for (std::uint32_t v : m.data) {
    if (word_size == 2)
      w.u16(static_cast<std::uint16_t>(v));
    else
      w.u32(v);
  }
  return w.take();
}

inline DepthMap decode_hpdm(std::span<const std::uint8_t> bytes, int expected_word_size) {
  ByteReader r(bytes);
  if (bytes.size() < 12 || r.text(4) != "HPDM") throw FormatError("missing HPDM magic");
  DepthMap m;
  m.width = r.u16();
  m.height = r.u16();
  m.bit_depth = r.u8();
  const int word = r.u8();
  r.u16();
  if (word != expected_word_size)
    throw FormatError("HPDM word size " + std::to_string(word) + " does not match declared format");
  if (m.bit_depth < kMinBitDepth || m.bit_depth > kMaxBitDepth || m.bit_depth > 8 * word)
    throw FormatError("HPDM bit depth " + std::to_string(m.bit_depth) + " invalid");
  const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
  if (r.remaining() != n * static_cast<std::size_t>(word)) throw FormatError("HPDM payload size mismatch");
  m.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.data[i] = word == 2 ? r.u16() : r.u32();
    detail::check_range(m.data[i], m.bit_depth);
  }
  m.recompute_mask();
  return m;
}

/// Binary PGM ("P5"), samples above 255 stored big-endian.
inline std::vector<std::uint8_t> encode_pgm(const DepthMap& m) {
  if (m.bit_depth > 16) throw RangeError("PGM cannot hold bit depth > 16");
  m.validate();
  const std::string header = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n" +
                             std::to_string(m.max_value()) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = m.max_value() > 255;
  for (std::uint32_t v : m.data) {
    if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

inline DepthMap decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("missing P5 magic");
  std::size_t pos = 2;
  const auto width = detail::pgm_token(bytes, pos);
  const auto height = detail::pgm_token(bytes, pos);
  const auto maxval = detail::pgm_token(bytes, pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PGM header");
  ++pos;
  if (width == 0 || height == 0 || width > 0xFFFF || height > 0xFFFF) throw FormatError("PGM dimensions invalid");
  if (maxval == 0 || maxval > 65535) throw FormatError("PGM maxval must be in [1, 65535]");
  DepthMap m;
  m.width = static_cast<std::uint32_t>(width);
  m.height = static_cast<std::uint32_t>(height);
  m.bit_depth = std::max(kMinBitDepth, static_cast<int>(std::bit_width(maxval)));
  const bool wide = maxval > 255;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos != n * (wide ? 2 : 1)) throw FormatError("PGM payload size mismatch");
  m.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t v = wide ? (std::uint32_t{bytes[pos]} << 8) | bytes[pos + 1] : bytes[pos];
    pos += wide ? 2 : 1;
    if (v > maxval) throw RangeError("PGM sample " + std::to_string(v) + " exceeds maxval");
    m.data[i] = v;
  }
  m.recompute_mask();
  return m;
}

inline std::vector<std::uint8_t> encode_depth(const DepthMap& m, DepthFormat f) {
  switch (f) {
    case DepthFormat::raw16: return encode_hpdm(m, 2);
    case DepthFormat::raw32: return encode_hpdm(m, 4);
    case DepthFormat::pgm16: return encode_pgm(m);
  }
  throw ArgumentError("unknown depth format");
}

inline DepthMap decode_depth(std::span<const std::uint8_t> bytes, DepthFormat f) {
  switch (f) {
    case DepthFormat::raw16: return decode_hpdm(bytes, 2);
    case DepthFormat::raw32: return decode_hpdm(bytes, 4);
    case DepthFormat::pgm16: return decode_pgm(bytes);
  }
  throw ArgumentError("unknown depth format");
}

inline DepthMap load_depth(const std::string& path, DepthFormat f) {
  try {
    return decode_depth(read_file(path), f);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const RangeError& e) {
    throw RangeError(path + ": " + e.what());
  }
}

inline void save_depth(const std::string& path, const DepthMap& m, DepthFormat f) {
  write_file(path, encode_depth(m, f));
}

/// Sniffs HPDM/PGM from the first bytes; HPDM word size picks raw16/raw32.
inline DepthFormat detect_depth_format(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return DepthFormat::pgm16;
  if (bytes.size() >= 12 && std::memcmp(bytes.data(), "HPDM", 4) == 0)
    return bytes[9] == 4 ? DepthFormat::raw32 : DepthFormat::raw16;
  throw FormatError("unrecognized depth file");
}

/// Meters to integer units, rounding halves away from zero.
inline std::uint32_t quantize(double meters, std::uint32_t precision_um, int bit_depth = kMaxBitDepth) {
  if (!(meters >= 0.0) || !std::isfinite(meters)) throw ArgumentError("depth must be finite and non-negative");
  if (precision_um == 0) throw ArgumentError("precision must be positive");
  const double units = std::round(meters * 1e6 / static_cast<double>(precision_um));
  if (units >= std::ldexp(1.0, bit_depth))
    throw RangeError("quantized depth " + std::to_string(units) + " >= 2^" + std::to_string(bit_depth));
  return static_cast<std::uint32_t>(units);
}

struct Point3 {
  double x = 0, y = 0, z = 0;
};

struct ProjectionConfig {
  std::uint32_t rows = 64;
  std::uint32_t cols = 2048;
  double elev_max = 2.0 * std::numbers::pi / 180.0;
  double elev_min = -24.8 * std::numbers::pi / 180.0;
  double max_range = 120.0;

  void validate() const {
    if (rows < 1 || cols < 1) throw ArgumentError("projection grid must be at least 1x1");
    if (!(elev_max > elev_min)) throw ArgumentError("elev_max must exceed elev_min");
    if (!(max_range > 0)) throw ArgumentError("max_range must be positive");
  }
};

/// Spherical projection of a point cloud into a range image; nearer points win.
/// Points beyond `max_range` are dropped.
inline DepthMap project_pointcloud(std::span<const Point3> points, const ProjectionConfig& cfg,
                                   std::uint32_t precision_um = 1000, int bit_depth = 18) {
  cfg.validate();
  DepthMap m = DepthMap::zeros(cfg.cols, cfg.rows, bit_depth, precision_um);
  std::vector<double> nearest(m.size(), std::numeric_limits<double>::infinity());
  const double fov = cfg.elev_max - cfg.elev_min;
  for (const Point3& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) throw ArgumentError("non-finite point");
    const double planar = std::hypot(p.x, p.y);
    const double depth = std::hypot(planar, p.z);
    if (depth > cfg.max_range) continue;
    const double azimuth = std::atan2(p.y, p.x);
    const double elevation = std::atan2(p.z, planar);
    auto col = static_cast<std::int64_t>(std::floor((0.5 - azimuth / (2.0 * std::numbers::pi)) * cfg.cols));
    col = ((col % cfg.cols) + cfg.cols) % cfg.cols;
    auto row = static_cast<std::int64_t>(std::floor((cfg.elev_max - elevation) / fov * cfg.rows));
    row = std::clamp<std::int64_t>(row, 0, cfg.rows - 1);
    const std::size_t idx = static_cast<std::size_t>(row) * cfg.cols + static_cast<std::size_t>(col);
    if (depth < nearest[idx]) {
      nearest[idx] = depth;
      m.data[idx] = quantize(depth, precision_um, bit_depth);
    }
  }
  m.recompute_mask();
  return m;
}

/// KITTI-style .bin scans: little-endian float32 (x, y, z, intensity).
inline std::vector<Point3> decode_pointcloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) throw FormatError("point cloud size is not a multiple of 16 bytes");
  ByteReader r(bytes);
  std::vector<Point3> pts(bytes.size() / 16);
  for (Point3& p : pts) {
    p.x = r.f32();
    p.y = r.f32();
    p.z = r.f32();
    r.f32();
  }
  return pts;
}

inline std::vector<Point3> load_pointcloud(const std::string& path) { return decode_pointcloud(read_file(path)); }

/// Fills invalid pixels with the lower median of the valid pixels in a
/// window x window neighbourhood of the original map.
inline DepthMap median_fill(const DepthMap& map, int window) {
  if (window < 3 || window % 2 == 0) throw ArgumentError("median window must be odd and >= 3");
  DepthMap out = map;
  const int half = window / 2;
  const int w = static_cast<int>(map.width);
  const int h = static_cast<int>(map.height);
  std::vector<std::uint32_t> values;
  values.reserve(static_cast<std::size_t>(window) * window);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * w + col;
      if (map.mask[idx]) continue;
      values.clear();
      for (int dr = -half; dr <= half; ++dr) {
        for (int dc = -half; dc <= half; ++dc) {
          const int rr = row + dr;
          const int cc = col + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
          if (map.mask[j]) values.push_back(map.data[j]);
        }
      }
      if (values.empty()) continue;
      const std::size_t mid = (values.size() - 1) / 2;
      std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
      out.data[idx] = values[mid];
      out.mask[idx] = 1;
    }
  }
  return out;
}

}  // namespace hpdc
