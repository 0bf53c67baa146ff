#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdnn {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Extents of a rank-4 tensor: (batch, channel, height, width), row-major
// with batch outermost.
struct Shape4 {
  int64_t b = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return b * c * h * w; }
  int64_t index(int64_t bi, int64_t ci, int64_t i, int64_t j) const {
    return ((bi * c + ci) * h + i) * w + j;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
struct Tensor {
  Shape4 shape{};
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape4 s) : shape(s), data(static_cast<size_t>(s.numel()), T(0)) {}
  Tensor(Shape4 s, T fill) : shape(s), data(static_cast<size_t>(s.numel()), fill) {}

  int64_t numel() const { return shape.numel(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& at(int64_t bi, int64_t ci, int64_t i, int64_t j) {
    assert(bi >= 0 && bi < shape.b && ci >= 0 && ci < shape.c);
    assert(i >= 0 && i < shape.h && j >= 0 && j < shape.w);
    return data[static_cast<size_t>(shape.index(bi, ci, i, j))];
  }
  const T& at(int64_t bi, int64_t ci, int64_t i, int64_t j) const {
    assert(bi >= 0 && bi < shape.b && ci >= 0 && ci < shape.c);
    assert(i >= 0 && i < shape.h && j >= 0 && j < shape.w);
    return data[static_cast<size_t>(shape.index(bi, ci, i, j))];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace cdnn
