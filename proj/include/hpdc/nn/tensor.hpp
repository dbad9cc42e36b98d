#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hpdc/errors.hpp"

namespace hpdc::nn {

/// NCHW extent.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) +
           ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense contiguous NCHW tensor with value semantics.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) throw ShapeError("tensor extents must be >= 1, got " + s.str());
  }
  Tensor(Shape s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
    if (data_.size() != s.numel()) throw ShapeError("tensor data does not match shape " + s.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to channel plane (n, c).
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

inline void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Grows every plane to (h, w) by replicating the last row and column.
template <class T>
Tensor<T> pad_edge(const Tensor<T>& t, int h, int w) {
  const Shape s = t.shape();
  if (h < s.h || w < s.w) throw ShapeError("pad_edge: target smaller than " + s.str());
  Tensor<T> out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = t.at(n, c, std::min(y, s.h - 1), std::min(x, s.w - 1));
  return out;
}

/// Top-left (h, w) window of every plane.
template <class T>
Tensor<T> crop(const Tensor<T>& t, int h, int w) {
  const Shape s = t.shape();
  if (h > s.h || w > s.w) throw ShapeError("crop: window larger than " + s.str());
  Tensor<T> out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y) std::copy_n(&t.at(n, c, y, 0), w, &out.at(n, c, y, 0));
  return out;
}

/// Smallest multiple of m that is >= v.
inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace hpdc::nn
