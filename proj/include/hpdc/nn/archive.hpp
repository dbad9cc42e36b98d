#pragma once

// Named-tensor archive:
//   "HPCK" u32 version
//   u32 scalar count, each: u16 name length, name, f64 value
//   u32 tensor count, each: u16 name length, name, u8 dtype (0 f32, 1 f64),
//       u8 rank (4), u32 extents[4], little-endian element data

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hpdc/bytes.hpp"
#include "hpdc/nn/tensor.hpp"

namespace hpdc::nn {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  std::map<std::string, double> scalars;
  std::map<std::string, Tensor<float>> tensors;

  friend bool operator==(const Archive&, const Archive&) = default;
};

inline void write_tensor_record(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.text(name);
  w.u8(0);
  w.u8(4);
  const Shape s = t.shape();
  w.u32(static_cast<std::uint32_t>(s.n));
  w.u32(static_cast<std::uint32_t>(s.c));
  w.u32(static_cast<std::uint32_t>(s.h));
  w.u32(static_cast<std::uint32_t>(s.w));
  for (float v : t.vec()) w.f32(v);
}

inline std::vector<std::uint8_t> serialize(const Archive& a) {
  ByteWriter w;
  w.text("HPCK");
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(a.scalars.size()));
  for (const auto& [name, value] : a.scalars) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.text(name);
    w.f64(value);
  }
  w.u32(static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto& [name, t] : a.tensors) write_tensor_record(w, name, t);
  return w.take();
}

inline Archive deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 8 || r.text(4) != "HPCK") throw FormatError("not a checkpoint archive");
  if (r.u32() != kArchiveVersion) throw FormatError("unsupported checkpoint version");
  Archive a;
  const std::uint32_t ns = r.u32();
  for (std::uint32_t i = 0; i < ns; ++i) {
    const std::string name = r.text(r.u16());
    a.scalars[name] = r.f64();
  }
  const std::uint32_t nt = r.u32();
  for (std::uint32_t i = 0; i < nt; ++i) {
    const std::string name = r.text(r.u16());
    const int dtype = r.u8();
    const int rank = r.u8();
    if (rank != 4) throw FormatError("tensor '" + name + "' has unsupported rank");
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) throw FormatError("tensor '" + name + "' has empty extent");
    if (s.numel() > r.remaining()) throw FormatError("tensor '" + name + "' truncated");
    Tensor<float> t(s);
    for (auto& v : t.vec()) {
      if (dtype == 0)
        v = r.f32();
      else if (dtype == 1)
        v = static_cast<float>(r.f64());
      else
        throw FormatError("tensor '" + name + "' has unknown dtype");
    }
    a.tensors.emplace(name, std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint archive");
  return a;
}

}  // namespace hpdc::nn
