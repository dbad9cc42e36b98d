#pragma once

// Carry-less 32-bit range coder (Subbotin) with byte-wise output. Totals are
// at most 2^16. The decoder consumes exactly the bytes the encoder produced.

#include <cstdint>
#include <span>
#include <vector>

#include "hpdc/entropy/cdf.hpp"
#include "hpdc/errors.hpp"

namespace hpdc::entropy {

inline constexpr std::uint32_t kTop = 1u << 24;
inline constexpr std::uint32_t kBot = 1u << 16;

class RangeEncoder {
 public:
  /// Codes the interval [cum, cum + freq) of `total` (total <= 2^16).
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    if (freq == 0 || total == 0 || total > kTotal || cum + freq > total) throw ArgumentError("invalid coding interval");
    range_ /= total;
    low_ += cum * range_;
    range_ *= freq;
    ++symbols_;
    normalize();
  }

  void encode(const QuantizedCdf& q, std::size_t symbol) {
    if (symbol >= q.size()) throw ArgumentError("symbol outside table");
    encode(q.cum[symbol], q.freq(symbol), kTotal);
  }

  /// Uniform value in [0, n) for any n >= 1, in 16-bit chunks.
  void encode_uniform(std::uint64_t value, std::uint64_t n) {
    if (value >= n) throw ArgumentError("uniform value out of range");
    while (n > kTotal) {
      encode(static_cast<std::uint32_t>(value & 0xFFFF), 1, kTotal);
      value >>= 16;
      n = (n + 0xFFFF) >> 16;
    }
    if (n > 1) encode(static_cast<std::uint32_t>(value), 1, static_cast<std::uint32_t>(n));
  }

  /// Flushes the coder. A coder that saw no symbols produces no bytes.
  std::vector<std::uint8_t> finish() {
    if (symbols_ == 0) return {};
    for (int i = 0; i < 4; ++i) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      low_ <<= 8;
    }
    return std::move(out_);
  }

  std::size_t bytes_written() const { return out_.size(); }

 private:
  void normalize() {
    for (;;) {
      if ((low_ ^ (low_ + range_)) >= kTop) {
        if (range_ >= kBot) break;
        range_ = (0u - low_) & (kBot - 1);
      }
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  std::uint32_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::size_t symbols_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    if (in_.empty()) return;
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  /// Target count in [0, total) for the next symbol; pair with consume().
  std::uint32_t peek(std::uint32_t total) {
    if (total == 0 || total > kTotal) throw ArgumentError("invalid coding total");
    if (in_.empty()) throw DecodeError("range-coded stream truncated");
    range_ /= total;
    const std::uint32_t v = (code_ - low_) / range_;
    if (v >= total) throw DecodeError("corrupt range-coded data");
    return v;
  }

  void consume(std::uint32_t cum, std::uint32_t freq) {
    low_ += cum * range_;
    range_ *= freq;
    for (;;) {
      if ((low_ ^ (low_ + range_)) >= kTop) {
        if (range_ >= kBot) break;
        range_ = (0u - low_) & (kBot - 1);
      }
      code_ = (code_ << 8) | next();
      low_ <<= 8;
      range_ <<= 8;
    }
  }

  std::size_t decode(const QuantizedCdf& q) {
    const std::size_t s = q.find(peek(kTotal));
    consume(q.cum[s], q.freq(s));
    return s;
  }

  std::uint64_t decode_uniform(std::uint64_t n) {
    if (n == 0) throw ArgumentError("empty uniform range");
    std::uint64_t value = 0;
    int shift = 0;
    while (n > kTotal) {
      const std::uint32_t v = peek(kTotal);
      consume(v, 1);
      value |= static_cast<std::uint64_t>(v) << shift;
      shift += 16;
      n = (n + 0xFFFF) >> 16;
    }
    if (n > 1) {
      const std::uint32_t v = peek(static_cast<std::uint32_t>(n));
      consume(v, 1);
      value |= static_cast<std::uint64_t>(v) << shift;
    }
    return value;
  }

  /// True when every byte has been consumed.
  bool exhausted() const { return pos_ == in_.size(); }

 private:
  std::uint8_t next() {
    if (pos_ >= in_.size()) throw DecodeError("range-coded stream truncated");
    return in_[pos_++];
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t low_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace hpdc::entropy
