#pragma once

// Compressed-file container (".hpdc"), little-endian:
//   "HPDC" u16 version
//   u16 width, u16 height, u8 B, u32 d, u32 precision
//   u32 msb scale, u32 lsb scale
//   u8[32] model hash
//   i32 r_min[2], i32 r_max[2]
//   u16 padded width, u16 padded height
//   i32 y_min, y_max, z_min, z_max
//   u32 crc32 of the three substreams
//   u32 length of z, y and r substreams, then their bytes in that order

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "hpdc/bytes.hpp"
#include "hpdc/errors.hpp"

namespace hpdc::entropy {

inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 2 + 1 + 4 + 4 + 4 + 4 + 32 + 16 + 4 + 16 + 4 + 12;

using ModelHash = std::array<std::uint8_t, 32>;

struct StreamHeader {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t bit_depth = 16;
  std::uint32_t d = 2;
  std::uint32_t precision = 1000;
  std::uint32_t msb_scale = 1;
  std::uint32_t lsb_scale = 1;
  ModelHash model_hash{};
  std::array<std::int32_t, 2> r_min{0, 0};
  std::array<std::int32_t, 2> r_max{0, 0};
  std::uint16_t padded_width = 0;
  std::uint16_t padded_height = 0;
  std::int32_t y_min = 0;
  std::int32_t y_max = 0;
  std::int32_t z_min = 0;
  std::int32_t z_max = 0;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct CodecStream {
  StreamHeader header;
  std::vector<std::uint8_t> z_bytes;
  std::vector<std::uint8_t> y_bytes;
  std::vector<std::uint8_t> r_bytes;

  std::size_t total_bytes() const { return kHeaderBytes + z_bytes.size() + y_bytes.size() + r_bytes.size(); }

  friend bool operator==(const CodecStream&, const CodecStream&) = default;
};

inline std::uint32_t payload_crc(const CodecStream& s) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto* part : {&s.z_bytes, &s.y_bytes, &s.r_bytes})
    if (!part->empty()) crc = crc32(crc, part->data(), static_cast<uInt>(part->size()));
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> write_stream(const CodecStream& s) {
  const StreamHeader& h = s.header;
  ByteWriter w;
  w.text("HPDC");
  w.u16(kStreamVersion);
  w.u16(h.width);
  w.u16(h.height);
  w.u8(h.bit_depth);
  w.u32(h.d);
  w.u32(h.precision);
  w.u32(h.msb_scale);
  w.u32(h.lsb_scale);
  w.bytes(h.model_hash);
  for (int c = 0; c < 2; ++c) w.i32(h.r_min[c]);
  for (int c = 0; c < 2; ++c) w.i32(h.r_max[c]);
  w.u16(h.padded_width);
  w.u16(h.padded_height);
  w.i32(h.y_min);
  w.i32(h.y_max);
  w.i32(h.z_min);
  w.i32(h.z_max);
  w.u32(payload_crc(s));
  w.u32(static_cast<std::uint32_t>(s.z_bytes.size()));
  w.u32(static_cast<std::uint32_t>(s.y_bytes.size()));
  w.u32(static_cast<std::uint32_t>(s.r_bytes.size()));
  w.bytes(s.z_bytes);
  w.bytes(s.y_bytes);
  w.bytes(s.r_bytes);
  return w.take();
}

/// Parses a container. A payload checksum mismatch raises DecodeError; a
/// malformed header raises FormatError.
inline CodecStream read_stream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.text(4) != "HPDC") throw FormatError("not an HPDC stream (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kStreamVersion) throw FormatError("unsupported HPDC stream version " + std::to_string(version));
  CodecStream s;
  StreamHeader& h = s.header;
  h.width = r.u16();
  h.height = r.u16();
  h.bit_depth = r.u8();
  h.d = r.u32();
  h.precision = r.u32();
  h.msb_scale = r.u32();
  h.lsb_scale = r.u32();
  const auto hash = r.bytes(32);
  std::copy(hash.begin(), hash.end(), h.model_hash.begin());
  for (int c = 0; c < 2; ++c) h.r_min[c] = r.i32();
  for (int c = 0; c < 2; ++c) h.r_max[c] = r.i32();
  h.padded_width = r.u16();
  h.padded_height = r.u16();
  h.y_min = r.i32();
  h.y_max = r.i32();
  h.z_min = r.i32();
  h.z_max = r.i32();
  const std::uint32_t crc = r.u32();
  const std::uint32_t nz = r.u32();
  const std::uint32_t ny = r.u32();
  const std::uint32_t nr = r.u32();
  if (h.width == 0 || h.height == 0) throw FormatError("stream declares an empty map");
  if (h.bit_depth < 8 || h.bit_depth > 24) throw FormatError("stream bit depth out of range");
  if (h.d < 2) throw FormatError("stream split divisor must be >= 2");
  if (h.padded_width < h.width || h.padded_height < h.height) throw FormatError("padded size smaller than map");
  for (int c = 0; c < 2; ++c)
    if (h.r_min[c] > h.r_max[c]) throw FormatError("residual bounds inverted");
  if (h.y_min > h.y_max || h.z_min > h.z_max) throw FormatError("latent bounds inverted");
  const std::uint64_t payload = std::uint64_t{nz} + ny + nr;
  if (payload != r.remaining())
    throw DecodeError("substream lengths (" + std::to_string(payload) + ") do not match payload size (" +
                      std::to_string(r.remaining()) + ")");
  const auto z = r.bytes(nz);
  const auto y = r.bytes(ny);
  const auto rr = r.bytes(nr);
  s.z_bytes.assign(z.begin(), z.end());
  s.y_bytes.assign(y.begin(), y.end());
  s.r_bytes.assign(rr.begin(), rr.end());
  if (payload_crc(s) != crc) throw DecodeError("payload checksum mismatch");
  return s;
}

inline std::string hash_hex(const ModelHash& h) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : h) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

}  // namespace hpdc::entropy
