#include "cdnn/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cdnn {
namespace {

struct Taps {
  std::vector<int64_t> lo, hi;
  std::vector<double> frac;
};

Taps bilinear_taps(int64_t in, int64_t out) {
  Taps t;
  t.lo.resize(size_t(out));
  t.hi.resize(size_t(out));
  t.frac.resize(size_t(out));
  const double scale = double(in) / double(out);
  for (int64_t d = 0; d < out; ++d) {
    double s = (double(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, double(in - 1));
    const int64_t i0 = int64_t(std::floor(s));
    t.lo[size_t(d)] = i0;
    t.hi[size_t(d)] = std::min(i0 + 1, in - 1);
    t.frac[size_t(d)] = s - double(i0);
  }
  return t;
}

std::vector<int64_t> nearest_taps(int64_t in, int64_t out) {
  std::vector<int64_t> t(static_cast<size_t>(out));
  const double scale = double(in) / double(out);
  for (int64_t d = 0; d < out; ++d)
    t[size_t(d)] = std::clamp(int64_t(std::floor((double(d) + 0.5) * scale)),
                              int64_t(0), in - 1);
  return t;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int64_t out_h, int64_t out_w) {
  check(out_h >= 1 && out_w >= 1, "resize: output extents must be positive");
  const int64_t h = in.shape.h, w = in.shape.w;
  const Taps ty = bilinear_taps(h, out_h);
  const Taps tx = bilinear_taps(w, out_w);
  Tensor<T> out({in.shape.b, in.shape.c, out_h, out_w});
  const int64_t planes = in.shape.b * in.shape.c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = in.ptr() + p * h * w;
    T* dst = out.ptr() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const T* r0 = src + ty.lo[size_t(i)] * w;
      const T* r1 = src + ty.hi[size_t(i)] * w;
      const double fy = ty.frac[size_t(i)];
      for (int64_t j = 0; j < out_w; ++j) {
        const int64_t j0 = tx.lo[size_t(j)], j1 = tx.hi[size_t(j)];
        const double fx = tx.frac[size_t(j)];
        const double top = (1 - fx) * double(r0[j0]) + fx * double(r0[j1]);
        const double bot = (1 - fx) * double(r1[j0]) + fx * double(r1[j1]);
        dst[i * out_w + j] = T((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& in, int64_t out_h, int64_t out_w) {
  check(out_h >= 1 && out_w >= 1, "resize: output extents must be positive");
  const int64_t h = in.shape.h, w = in.shape.w;
  const auto ty = nearest_taps(h, out_h);
  const auto tx = nearest_taps(w, out_w);
  Tensor<T> out({in.shape.b, in.shape.c, out_h, out_w});
  const int64_t planes = in.shape.b * in.shape.c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = in.ptr() + p * h * w;
    T* dst = out.ptr() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i)
      for (int64_t j = 0; j < out_w; ++j)
        dst[i * out_w + j] = src[ty[size_t(i)] * w + tx[size_t(j)]];
  }
  return out;
}

template Tensor<float> resize_bilinear<float>(const Tensor<float>&, int64_t,
                                              int64_t);
template Tensor<double> resize_bilinear<double>(const Tensor<double>&, int64_t,
                                                int64_t);
template Tensor<float> resize_nearest<float>(const Tensor<float>&, int64_t,
                                             int64_t);
template Tensor<double> resize_nearest<double>(const Tensor<double>&, int64_t,
                                               int64_t);

}  // namespace cdnn
