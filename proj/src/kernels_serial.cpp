// Naive reference kernels. Direct transcriptions of the definitions, kept
// for testing the OpenMP implementations against and for the benchmark.

#include <algorithm>
#include <cmath>

#include "cdnn/kernels.hpp"

namespace cdnn::kernels::serial {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                    Tensor<T>& y, Accum acc) {
  check_conv_shapes(x.shape, w.shape, "conv2d");
  const int64_t B = x.shape.b, Cin = x.shape.c, H = x.shape.h, W = x.shape.w;
  const int64_t Cout = w.shape.b, kh = w.shape.h, kw = w.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  if (acc == Accum::Overwrite) y = Tensor<T>({B, Cout, H, W});
  check(y.shape == Shape4{B, Cout, H, W}, "conv2d: bad output shape");
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < Cout; ++o)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          T s = bias ? bias[o] : T(0);
          for (int64_t c = 0; c < Cin; ++c)
            for (int64_t u = 0; u < kh; ++u)
              for (int64_t v = 0; v < kw; ++v) {
                const int64_t r = i + u - ph, q = j + v - pw;
                if (r >= 0 && r < H && q >= 0 && q < W)
                  s += x.at(b, c, r, q) * w.at(o, c, u, v);
              }
          y.at(b, o, i, j) += s;
        }
}

template <typename T>
void conv2d_adjoint(const Tensor<T>& in, const Tensor<T>& w, const T* bias,
                    Tensor<T>& out, Accum acc) {
  const int64_t B = in.shape.b, Cout = in.shape.c, H = in.shape.h, W = in.shape.w;
  check(w.shape.b == Cout, "conv2d_adjoint: channel/weight mismatch " +
                               in.shape.str() + " vs " + w.shape.str());
  const int64_t Cin = w.shape.c, kh = w.shape.h, kw = w.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  if (acc == Accum::Overwrite) out = Tensor<T>({B, Cin, H, W});
  check(out.shape == Shape4{B, Cin, H, W}, "conv2d_adjoint: bad output shape");
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < Cin; ++c)
      for (int64_t p = 0; p < H; ++p)
        for (int64_t q = 0; q < W; ++q) {
          T s = bias ? bias[c] : T(0);
          for (int64_t o = 0; o < Cout; ++o)
            for (int64_t u = 0; u < kh; ++u)
              for (int64_t v = 0; v < kw; ++v) {
                const int64_t r = p - u + ph, s2 = q - v + pw;
                if (r >= 0 && r < H && s2 >= 0 && s2 < W)
                  s += in.at(b, o, r, s2) * w.at(o, c, u, v);
              }
          out.at(b, c, p, q) += s;
        }
}

template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gw,
                        Accum acc) {
  const int64_t B = x.shape.b, Cin = x.shape.c, H = x.shape.h, W = x.shape.w;
  const int64_t Cout = gy.shape.c;
  check(gy.shape.b == B && gy.shape.h == H && gy.shape.w == W,
        "conv2d_weight_grad: mismatched activations " + x.shape.str() +
            " vs " + gy.shape.str());
  check(gw.shape.b == Cout && gw.shape.c == Cin,
        "conv2d_weight_grad: bad weight shape " + gw.shape.str());
  const int64_t kh = gw.shape.h, kw = gw.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  if (acc == Accum::Overwrite) std::fill(gw.data.begin(), gw.data.end(), T(0));
  for (int64_t o = 0; o < Cout; ++o)
    for (int64_t c = 0; c < Cin; ++c)
      for (int64_t u = 0; u < kh; ++u)
        for (int64_t v = 0; v < kw; ++v) {
          T s = 0;
          for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < H; ++i)
              for (int64_t j = 0; j < W; ++j) {
                const int64_t r = i + u - ph, q = j + v - pw;
                if (r >= 0 && r < H && q >= 0 && q < W)
                  s += x.at(b, c, r, q) * gy.at(b, o, i, j);
              }
          gw.at(o, c, u, v) += s;
        }
}

template <typename T>
void channel_sum(const Tensor<T>& t, T* out, Accum acc) {
  for (int64_t c = 0; c < t.shape.c; ++c) {
    T s = 0;
    for (int64_t b = 0; b < t.shape.b; ++b)
      for (int64_t i = 0; i < t.shape.h; ++i)
        for (int64_t j = 0; j < t.shape.w; ++j) s += t.at(b, c, i, j);
    out[c] = (acc == Accum::Add ? out[c] : T(0)) + s;
  }
}

template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        std::vector<uint8_t>& argmax) {
  check(x.shape.h % 2 == 0 && x.shape.w % 2 == 0,
        "maxpool2x2: odd spatial extent " + x.shape.str());
  const int64_t B = x.shape.b, C = x.shape.c, Ho = x.shape.h / 2, Wo = x.shape.w / 2;
  y = Tensor<T>({B, C, Ho, Wo});
  argmax.assign(static_cast<size_t>(y.numel()), 0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          T best = x.at(b, c, 2 * i, 2 * j);
          uint8_t arg = 0;
          for (uint8_t k = 1; k < 4; ++k) {
            const T v = x.at(b, c, 2 * i + k / 2, 2 * j + k % 2);
            if (v > best) {
              best = v;
              arg = k;
            }
          }
          y.at(b, c, i, j) = best;
          argmax[static_cast<size_t>(y.shape.index(b, c, i, j))] = arg;
        }
}

template <typename T>
void maxpool2x2_backward(const Tensor<T>& gy, const std::vector<uint8_t>& argmax,
                         Tensor<T>& gx, Accum acc) {
  const int64_t B = gy.shape.b, C = gy.shape.c, Ho = gy.shape.h, Wo = gy.shape.w;
  if (acc == Accum::Overwrite) gx = Tensor<T>({B, C, 2 * Ho, 2 * Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          const uint8_t k = argmax[static_cast<size_t>(gy.shape.index(b, c, i, j))];
          gx.at(b, c, 2 * i + k / 2, 2 * j + k % 2) += gy.at(b, c, i, j);
        }
}

template <typename T>
void upsample2x2_forward(const Tensor<T>& x, Tensor<T>& y) {
  const int64_t B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  y = Tensor<T>({B, C, 2 * H, 2 * W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < 2 * H; ++i)
        for (int64_t j = 0; j < 2 * W; ++j)
          y.at(b, c, i, j) = x.at(b, c, i / 2, j / 2);
}

template <typename T>
void upsample2x2_backward(const Tensor<T>& gy, Tensor<T>& gx, Accum acc) {
  const int64_t B = gy.shape.b, C = gy.shape.c, H = gy.shape.h / 2, W = gy.shape.w / 2;
  if (acc == Accum::Overwrite) gx = Tensor<T>({B, C, H, W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
          gx.at(b, c, i, j) += gy.at(b, c, 2 * i, 2 * j) +
                               gy.at(b, c, 2 * i, 2 * j + 1) +
                               gy.at(b, c, 2 * i + 1, 2 * j) +
                               gy.at(b, c, 2 * i + 1, 2 * j + 1);
}

template <typename T>
void channel_moments(const Tensor<T>& x, T* mean, T* var) {
  const int64_t n = x.shape.b * x.shape.h * x.shape.w;
  for (int64_t c = 0; c < x.shape.c; ++c) {
    double m = 0;
    for (int64_t b = 0; b < x.shape.b; ++b)
      for (int64_t i = 0; i < x.shape.h; ++i)
        for (int64_t j = 0; j < x.shape.w; ++j) m += x.at(b, c, i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (int64_t b = 0; b < x.shape.b; ++b)
      for (int64_t i = 0; i < x.shape.h; ++i)
        for (int64_t j = 0; j < x.shape.w; ++j) {
          const double d = x.at(b, c, i, j) - m;
          v += d * d;
        }
    mean[c] = static_cast<T>(m);
    var[c] = static_cast<T>(v / static_cast<double>(n));
  }
}

template <typename T>
void batchnorm_apply(const Tensor<T>& x, const T* mean, const T* var,
                     const T* gamma, const T* beta, T eps, Tensor<T>& y) {
  y = Tensor<T>(x.shape);
  for (int64_t b = 0; b < x.shape.b; ++b)
    for (int64_t c = 0; c < x.shape.c; ++c) {
      const T inv = T(1) / std::sqrt(var[c] + eps);
      for (int64_t i = 0; i < x.shape.h; ++i)
        for (int64_t j = 0; j < x.shape.w; ++j)
          y.at(b, c, i, j) = gamma[c] * (x.at(b, c, i, j) - mean[c]) * inv + beta[c];
    }
}

template <typename T>
void batchnorm_backward(const Tensor<T>& x, const T* mean, const T* var,
                        const T* gamma, T eps, const Tensor<T>& gy,
                        Tensor<T>& gx, T* ggamma, T* gbeta, Accum acc) {
  const int64_t B = x.shape.b, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  const double n = static_cast<double>(B * H * W);
  if (acc == Accum::Overwrite) gx = Tensor<T>(x.shape);
  for (int64_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const double g = gy.at(b, c, i, j);
          sum_gy += g;
          sum_gy_xhat += g * (x.at(b, c, i, j) - mean[c]) * inv;
        }
    if (acc == Accum::Overwrite) {
      ggamma[c] = 0;
      gbeta[c] = 0;
    }
    ggamma[c] += static_cast<T>(sum_gy_xhat);
    gbeta[c] += static_cast<T>(sum_gy);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const double xhat = (x.at(b, c, i, j) - mean[c]) * inv;
          const double g = gy.at(b, c, i, j);
          gx.at(b, c, i, j) += static_cast<T>(
              gamma[c] * inv * (g - sum_gy / n - xhat * sum_gy_xhat / n));
        }
  }
}

#define CDNN_INSTANTIATE(T)                                                    \
  template void conv2d_forward(const Tensor<T>&, const Tensor<T>&, const T*,  \
                               Tensor<T>&, Accum);                             \
  template void conv2d_adjoint(const Tensor<T>&, const Tensor<T>&, const T*,  \
                               Tensor<T>&, Accum);                             \
  template void conv2d_weight_grad(const Tensor<T>&, const Tensor<T>&,        \
                                   Tensor<T>&, Accum);                         \
  template void channel_sum(const Tensor<T>&, T*, Accum);                      \
  template void maxpool2x2_forward(const Tensor<T>&, Tensor<T>&,              \
                                   std::vector<uint8_t>&);                     \
  template void maxpool2x2_backward(const Tensor<T>&,                          \
                                    const std::vector<uint8_t>&, Tensor<T>&,  \
                                    Accum);                                    \
  template void upsample2x2_forward(const Tensor<T>&, Tensor<T>&);            \
  template void upsample2x2_backward(const Tensor<T>&, Tensor<T>&, Accum);    \
  template void channel_moments(const Tensor<T>&, T*, T*);                     \
  template void batchnorm_apply(const Tensor<T>&, const T*, const T*,         \
                                const T*, const T*, T, Tensor<T>&);            \
  template void batchnorm_backward(const Tensor<T>&, const T*, const T*,      \
                                   const T*, T, const Tensor<T>&, Tensor<T>&, \
                                   T*, T*, Accum);

CDNN_INSTANTIATE(float)
CDNN_INSTANTIATE(double)
#undef CDNN_INSTANTIATE

}  // namespace cdnn::kernels::serial
