// Production kernels. Convolutions copy their input planes into zero-padded
// scratch and their weights into per-tile contiguous runs once per call, so
// the hot loops carry no boundary branches or index arithmetic, then
// accumulate register tiles of 4 output channels x 2 vectors. Every output
// element is reduced in a fixed (channel, row, column) order and each element
// is owned by exactly one thread, so results are bitwise independent of the
// thread count.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "cdnn/kernels.hpp"

namespace cdnn::kernels {

void check_conv_shapes(const Shape4& x, const Shape4& w, const char* who) {
  check(w.b >= 1 && w.c >= 1 && w.h >= 1 && w.w >= 1,
        std::string(who) + ": bad weight shape " + w.str());
  check(x.c == w.c, std::string(who) + ": input " + x.str() +
                        " has channel extent " + std::to_string(x.c) +
                        " but weights " + w.str() + " expect " +
                        std::to_string(w.c));
}

namespace {

template <typename T>
struct VT;
template <>
struct VT<float> {
  using V = float __attribute__((vector_size(64)));
  static constexpr int lanes = 16;
};
template <>
struct VT<double> {
  using V = double __attribute__((vector_size(64)));
  static constexpr int lanes = 8;
};

template <typename T>
inline typename VT<T>::V vload(const T* p) {
  typename VT<T>::V v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline typename VT<T>::V vload_partial(const T* p, int64_t n) {
  typename VT<T>::V v{};
  __builtin_memcpy(&v, p, static_cast<size_t>(n) * sizeof(T));
  return v;
}

template <typename T>
inline void vstore(T* p, typename VT<T>::V v) {
  __builtin_memcpy(p, &v, sizeof v);
}

template <typename T>
inline typename VT<T>::V vsplat(T s) {
  return typename VT<T>::V{} + s;
}

template <typename T>
inline T vsum(typename VT<T>::V v) {
  T s = 0;
  for (int l = 0; l < VT<T>::lanes; ++l) s += v[l];
  return s;
}

inline int64_t round_up(int64_t n, int64_t m) { return (n + m - 1) / m * m; }

// Padded plane width: room for every kernel tap, a full trailing vector, and
// vector-aligned iteration over the logical row.
template <typename T>
int64_t padded_width(int64_t W, int64_t kw) {
  return round_up(W, VT<T>::lanes) + kw - 1 + VT<T>::lanes;
}

// Copy (B*C) planes of x into zero-filled (Hp, Wp) frames at (pad_top, pad_left).
template <typename T>
void pack_planes(const Tensor<T>& x, int64_t pad_top, int64_t pad_left,
                 int64_t Hp, int64_t Wp, std::vector<T>& buf) {
  const int64_t planes = x.shape.b * x.shape.c, H = x.shape.h, W = x.shape.w;
  buf.assign(static_cast<size_t>(planes * Hp * Wp), T(0));
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * H * W;
    T* dst = buf.data() + p * Hp * Wp + pad_top * Wp + pad_left;
    for (int64_t i = 0; i < H; ++i)
      std::memcpy(dst + i * Wp, src + i * W, sizeof(T) * static_cast<size_t>(W));
  }
}

template <typename T>
std::vector<T>& pack_scratch_a() {
  static thread_local std::vector<T> buf;
  return buf;
}
template <typename T>
std::vector<T>& pack_scratch_b() {
  static thread_local std::vector<T> buf;
  return buf;
}
template <typename T>
std::vector<T>& pack_scratch_w() {
  static thread_local std::vector<T> buf;
  return buf;
}

// Weights regrouped per tile of 4 output channels, contiguous in reduction
// order: wbuf[tile][c*kh*kw + u*kw + v][t]. Missing channels stay zero.
template <typename T, class WAt>
void pack_weight_tiles(WAt wat, int64_t cout, int64_t cin, int64_t kh,
                       int64_t kw, std::vector<T>& wbuf) {
  const int64_t K = cin * kh * kw, tiles = (cout + 3) / 4;
  wbuf.assign(static_cast<size_t>(tiles * K * 4), T(0));
  for (int64_t tile = 0; tile < tiles; ++tile) {
    T* dst = wbuf.data() + tile * K * 4;
    const int nt = static_cast<int>(std::min<int64_t>(4, cout - tile * 4));
    int64_t k = 0;
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t u = 0; u < kh; ++u)
        for (int64_t v = 0; v < kw; ++v, ++k)
          for (int t = 0; t < nt; ++t) dst[k * 4 + t] = wat(tile * 4 + t, c, u, v);
  }
}

// One register tile: 4 output channels x JTV vectors of one output row,
// reduced over (c, u, v) in that order. store_len < JTV*lanes trims the tail.
template <typename T, int JTV>
inline void conv_chunk(const T* padplane0, int64_t plane_stride, int64_t Wp,
                       int64_t cin, int64_t kh, int64_t kw, int64_t i,
                       int64_t j0, const T* wtile, const T* btile,
                       T* const* outrows, int store_n, int64_t store_len,
                       Accum acc_mode) {
  using V = typename VT<T>::V;
  constexpr int L = VT<T>::lanes;
  V acc[4][JTV];
  for (int t = 0; t < 4; ++t) {
    const V b = vsplat<T>(btile[t]);
    for (int vj = 0; vj < JTV; ++vj) acc[t][vj] = b;
  }
  if (acc_mode == Accum::Add)
    for (int t = 0; t < store_n; ++t)
      for (int vj = 0; vj < JTV; ++vj) {
        const int64_t lo = vj * L;
        if (lo >= store_len) break;
        const int64_t n = std::min<int64_t>(L, store_len - lo);
        acc[t][vj] += n == L ? vload<T>(outrows[t] + j0 + lo)
                             : vload_partial<T>(outrows[t] + j0 + lo, n);
      }
  const T* wk = wtile;
  const T* plane = padplane0 + i * Wp + j0;
  for (int64_t c = 0; c < cin; ++c, plane += plane_stride) {
    const T* row = plane;
    for (int64_t u = 0; u < kh; ++u, row += Wp) {
      for (int64_t v = 0; v < kw; ++v, wk += 4) {
        const V w0 = vsplat<T>(wk[0]), w1 = vsplat<T>(wk[1]);
        const V w2 = vsplat<T>(wk[2]), w3 = vsplat<T>(wk[3]);
        for (int vj = 0; vj < JTV; ++vj) {
          const V xs = vload<T>(row + v + vj * L);
          acc[0][vj] += w0 * xs;
          acc[1][vj] += w1 * xs;
          acc[2][vj] += w2 * xs;
          acc[3][vj] += w3 * xs;
        }
      }
    }
  }
  for (int t = 0; t < store_n; ++t)
    for (int vj = 0; vj < JTV; ++vj) {
      const int64_t lo = vj * L;
      if (lo >= store_len) break;
      const int64_t n = std::min<int64_t>(L, store_len - lo);
      if (n == L)
        vstore<T>(outrows[t] + j0 + lo, acc[t][vj]);
      else
        std::memcpy(outrows[t] + j0 + lo, &acc[t][vj],
                    static_cast<size_t>(n) * sizeof(T));
    }
}

// Shared driver for conv2d_forward (direct taps) and conv2d_adjoint
// (flipped taps, transposed channel axes of w).
template <typename T, class WAt>
void conv_direct(const Tensor<T>& in, int64_t pad_top, int64_t pad_left,
                 int64_t kh, int64_t kw, int64_t cout, WAt wat, const T* bias,
                 Tensor<T>& out, Accum acc_mode) {
  const int64_t B = in.shape.b, cin = in.shape.c, H = in.shape.h, W = in.shape.w;
  if (acc_mode == Accum::Overwrite) {
    if (out.shape != Shape4{B, cout, H, W}) out = Tensor<T>({B, cout, H, W});
  } else {
    check(out.shape == Shape4{B, cout, H, W},
          "conv: accumulate target has shape " + out.shape.str() +
              ", expected " + Shape4{B, cout, H, W}.str());
  }
  const int64_t Hp = H + kh - 1, Wp = padded_width<T>(W, kw);
  std::vector<T>& pad = pack_scratch_a<T>();
  pack_planes(in, pad_top, pad_left, Hp, Wp, pad);
  std::vector<T>& wpk = pack_scratch_w<T>();
  pack_weight_tiles(wat, cout, cin, kh, kw, wpk);
  const int64_t plane_stride = Hp * Wp, K4 = cin * kh * kw * 4;
  const int64_t tiles = (cout + 3) / 4;
  constexpr int L = VT<T>::lanes;
#pragma omp parallel for schedule(static)
  for (int64_t task = 0; task < B * tiles; ++task) {
    const int64_t b = task / tiles, tile = task % tiles, oc0 = tile * 4;
    const int store_n = static_cast<int>(std::min<int64_t>(4, cout - oc0));
    const T* padplane0 = pad.data() + b * cin * plane_stride;
    const T* wtile = wpk.data() + tile * K4;
    T btile[4] = {T(0), T(0), T(0), T(0)};
    if (bias)
      for (int t = 0; t < store_n; ++t) btile[t] = bias[oc0 + t];
    for (int64_t i = 0; i < H; ++i) {
      T* outrows[4];
      for (int t = 0; t < store_n; ++t)
        outrows[t] = out.ptr() + out.shape.index(b, oc0 + t, i, 0);
      int64_t j0 = 0;
      while (W - j0 >= 2 * L) {
        conv_chunk<T, 2>(padplane0, plane_stride, Wp, cin, kh, kw, i, j0,
                         wtile, btile, outrows, store_n, 2 * L, acc_mode);
        j0 += 2 * L;
      }
      const int64_t rem = W - j0;
      if (rem > L)
        conv_chunk<T, 2>(padplane0, plane_stride, Wp, cin, kh, kw, i, j0,
                         wtile, btile, outrows, store_n, rem, acc_mode);
      else if (rem > 0)
        conv_chunk<T, 1>(padplane0, plane_stride, Wp, cin, kh, kw, i, j0,
                         wtile, btile, outrows, store_n, rem, acc_mode);
    }
  }
}

// Weight-gradient inner loops. The accumulators are individual named
// variables, never an addressable array: gcc keeps an array in a stack slot
// and rewrites it every iteration, which turns the loop store-bound. The 3x3
// kernel shares each loaded input vector between two output channels.
template <typename T>
void wgrad_k3_pair(const T* xpad, const T* gpad, int64_t xstride,
                   int64_t gstride, int64_t Wp, int64_t Wpg, int64_t B,
                   int64_t cin, int64_t cout, int64_t o0, int64_t c,
                   int64_t H, int64_t Wg, T* gw) {
  using V = typename VT<T>::V;
  constexpr int L = VT<T>::lanes;
  const V z = vsplat<T>(T(0));
  V a0 = z, a1 = z, a2 = z, a3 = z, a4 = z, a5 = z, a6 = z, a7 = z, a8 = z;
  V b0 = z, b1 = z, b2 = z, b3 = z, b4 = z, b5 = z, b6 = z, b7 = z, b8 = z;
  for (int64_t b = 0; b < B; ++b) {
    const T* gplane = gpad + (b * cout + o0) * gstride;
    const T* xplane = xpad + (b * cin + c) * xstride;
    for (int64_t i = 0; i < H; ++i) {
      const T* g0 = gplane + i * Wpg;
      const T* g1 = g0 + gstride;
      const T* x0 = xplane + i * Wp;
      const T* x1 = x0 + Wp;
      const T* x2 = x1 + Wp;
      for (int64_t j = 0; j < Wg; j += L) {
        const V gv0 = vload<T>(g0 + j), gv1 = vload<T>(g1 + j);
        V xs;
        xs = vload<T>(x0 + j);     a0 += xs * gv0; b0 += xs * gv1;
        xs = vload<T>(x0 + j + 1); a1 += xs * gv0; b1 += xs * gv1;
        xs = vload<T>(x0 + j + 2); a2 += xs * gv0; b2 += xs * gv1;
        xs = vload<T>(x1 + j);     a3 += xs * gv0; b3 += xs * gv1;
        xs = vload<T>(x1 + j + 1); a4 += xs * gv0; b4 += xs * gv1;
        xs = vload<T>(x1 + j + 2); a5 += xs * gv0; b5 += xs * gv1;
        xs = vload<T>(x2 + j);     a6 += xs * gv0; b6 += xs * gv1;
        xs = vload<T>(x2 + j + 1); a7 += xs * gv0; b7 += xs * gv1;
        xs = vload<T>(x2 + j + 2); a8 += xs * gv0; b8 += xs * gv1;
      }
    }
  }
  T* ga = gw + (o0 * cin + c) * 9;
  T* gb = ga + cin * 9;
  ga[0] += vsum<T>(a0); ga[1] += vsum<T>(a1); ga[2] += vsum<T>(a2);
  ga[3] += vsum<T>(a3); ga[4] += vsum<T>(a4); ga[5] += vsum<T>(a5);
  ga[6] += vsum<T>(a6); ga[7] += vsum<T>(a7); ga[8] += vsum<T>(a8);
  gb[0] += vsum<T>(b0); gb[1] += vsum<T>(b1); gb[2] += vsum<T>(b2);
  gb[3] += vsum<T>(b3); gb[4] += vsum<T>(b4); gb[5] += vsum<T>(b5);
  gb[6] += vsum<T>(b6); gb[7] += vsum<T>(b7); gb[8] += vsum<T>(b8);
}

template <typename T>
void wgrad_k3_single(const T* xpad, const T* gpad, int64_t xstride,
                     int64_t gstride, int64_t Wp, int64_t Wpg, int64_t B,
                     int64_t cin, int64_t cout, int64_t o, int64_t c,
                     int64_t H, int64_t Wg, T* gw) {
  using V = typename VT<T>::V;
  constexpr int L = VT<T>::lanes;
  const V z = vsplat<T>(T(0));
  V a0 = z, a1 = z, a2 = z, a3 = z, a4 = z, a5 = z, a6 = z, a7 = z, a8 = z;
  for (int64_t b = 0; b < B; ++b) {
    const T* gplane = gpad + (b * cout + o) * gstride;
    const T* xplane = xpad + (b * cin + c) * xstride;
    for (int64_t i = 0; i < H; ++i) {
      const T* g0 = gplane + i * Wpg;
      const T* x0 = xplane + i * Wp;
      const T* x1 = x0 + Wp;
      const T* x2 = x1 + Wp;
      for (int64_t j = 0; j < Wg; j += L) {
        const V gv = vload<T>(g0 + j);
        a0 += vload<T>(x0 + j) * gv;
        a1 += vload<T>(x0 + j + 1) * gv;
        a2 += vload<T>(x0 + j + 2) * gv;
        a3 += vload<T>(x1 + j) * gv;
        a4 += vload<T>(x1 + j + 1) * gv;
        a5 += vload<T>(x1 + j + 2) * gv;
        a6 += vload<T>(x2 + j) * gv;
        a7 += vload<T>(x2 + j + 1) * gv;
        a8 += vload<T>(x2 + j + 2) * gv;
      }
    }
  }
  T* ga = gw + (o * cin + c) * 9;
  ga[0] += vsum<T>(a0); ga[1] += vsum<T>(a1); ga[2] += vsum<T>(a2);
  ga[3] += vsum<T>(a3); ga[4] += vsum<T>(a4); ga[5] += vsum<T>(a5);
  ga[6] += vsum<T>(a6); ga[7] += vsum<T>(a7); ga[8] += vsum<T>(a8);
}

template <typename T>
void wgrad_k4_single(const T* xpad, const T* gpad, int64_t xstride,
                     int64_t gstride, int64_t Wp, int64_t Wpg, int64_t B,
                     int64_t cin, int64_t cout, int64_t o, int64_t c,
                     int64_t H, int64_t Wg, T* gw) {
  using V = typename VT<T>::V;
  constexpr int L = VT<T>::lanes;
  const V z = vsplat<T>(T(0));
  V a0 = z, a1 = z, a2 = z, a3 = z, a4 = z, a5 = z, a6 = z, a7 = z;
  V a8 = z, a9 = z, aa = z, ab = z, ac = z, ad = z, ae = z, af = z;
  for (int64_t b = 0; b < B; ++b) {
    const T* gplane = gpad + (b * cout + o) * gstride;
    const T* xplane = xpad + (b * cin + c) * xstride;
    for (int64_t i = 0; i < H; ++i) {
      const T* g0 = gplane + i * Wpg;
      const T* x0 = xplane + i * Wp;
      const T* x1 = x0 + Wp;
      const T* x2 = x1 + Wp;
      const T* x3 = x2 + Wp;
      for (int64_t j = 0; j < Wg; j += L) {
        const V gv = vload<T>(g0 + j);
        a0 += vload<T>(x0 + j) * gv;
        a1 += vload<T>(x0 + j + 1) * gv;
        a2 += vload<T>(x0 + j + 2) * gv;
        a3 += vload<T>(x0 + j + 3) * gv;
        a4 += vload<T>(x1 + j) * gv;
        a5 += vload<T>(x1 + j + 1) * gv;
        a6 += vload<T>(x1 + j + 2) * gv;
        a7 += vload<T>(x1 + j + 3) * gv;
        a8 += vload<T>(x2 + j) * gv;
        a9 += vload<T>(x2 + j + 1) * gv;
        aa += vload<T>(x2 + j + 2) * gv;
        ab += vload<T>(x2 + j + 3) * gv;
        ac += vload<T>(x3 + j) * gv;
        ad += vload<T>(x3 + j + 1) * gv;
        ae += vload<T>(x3 + j + 2) * gv;
        af += vload<T>(x3 + j + 3) * gv;
      }
    }
  }
  T* ga = gw + (o * cin + c) * 16;
  ga[0] += vsum<T>(a0); ga[1] += vsum<T>(a1); ga[2] += vsum<T>(a2);
  ga[3] += vsum<T>(a3); ga[4] += vsum<T>(a4); ga[5] += vsum<T>(a5);
  ga[6] += vsum<T>(a6); ga[7] += vsum<T>(a7); ga[8] += vsum<T>(a8);
  ga[9] += vsum<T>(a9); ga[10] += vsum<T>(aa); ga[11] += vsum<T>(ab);
  ga[12] += vsum<T>(ac); ga[13] += vsum<T>(ad); ga[14] += vsum<T>(ae);
  ga[15] += vsum<T>(af);
}

template <typename T>
void wgrad_k3(const T* xpad, const T* gpad, int64_t xstride, int64_t gstride,
              int64_t Wp, int64_t Wpg, int64_t B, int64_t cin, int64_t cout,
              int64_t H, int64_t Wg, T* gw) {
  const int64_t pairs = cout / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t op = 0; op < pairs; ++op)
    for (int64_t c = 0; c < cin; ++c)
      wgrad_k3_pair(xpad, gpad, xstride, gstride, Wp, Wpg, B, cin, cout,
                    op * 2, c, H, Wg, gw);
  if (pairs * 2 < cout)
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < cin; ++c)
      wgrad_k3_single(xpad, gpad, xstride, gstride, Wp, Wpg, B, cin, cout,
                      cout - 1, c, H, Wg, gw);
}

template <typename T>
void wgrad_k4(const T* xpad, const T* gpad, int64_t xstride, int64_t gstride,
              int64_t Wp, int64_t Wpg, int64_t B, int64_t cin, int64_t cout,
              int64_t H, int64_t Wg, T* gw) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t o = 0; o < cout; ++o)
    for (int64_t c = 0; c < cin; ++c)
      wgrad_k4_single(xpad, gpad, xstride, gstride, Wp, Wpg, B, cin, cout, o,
                      c, H, Wg, gw);
}

// Same, arbitrary tap count, one tap at a time.
template <typename T>
void wgrad_any(const T* xpad, const T* gpad, int64_t xstride, int64_t gstride,
               int64_t Wp, int64_t Wpg, int64_t B, int64_t cin, int64_t cout,
               int64_t H, int64_t Wg, int64_t kh, int64_t kw, T* gw) {
  using V = typename VT<T>::V;
  constexpr int L = VT<T>::lanes;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t o = 0; o < cout; ++o)
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t u = 0; u < kh; ++u)
        for (int64_t v = 0; v < kw; ++v) {
          V acc = vsplat<T>(T(0));
          for (int64_t b = 0; b < B; ++b) {
            const T* gplane = gpad + (b * cout + o) * gstride;
            const T* xplane = xpad + (b * cin + c) * xstride;
            for (int64_t i = 0; i < H; ++i) {
              const T* grow = gplane + i * Wpg;
              const T* xrow = xplane + (i + u) * Wp;
              for (int64_t j = 0; j < Wg; j += L)
                acc += vload<T>(xrow + j + v) * vload<T>(grow + j);
            }
          }
          gw[((o * cin + c) * kh + u) * kw + v] += vsum<T>(acc);
        }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                    Tensor<T>& y, Accum acc) {
  check_conv_shapes(x.shape, w.shape, "conv2d");
  const int64_t cin = w.shape.c, kh = w.shape.h, kw = w.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const T* wp = w.ptr();
  auto wat = [=](int64_t o, int64_t c, int64_t u, int64_t v) -> T {
    return wp[((o * cin + c) * kh + u) * kw + v];
  };
  conv_direct(x, ph, pw, kh, kw, w.shape.b, wat, bias, y, acc);
}

template <typename T>
void conv2d_adjoint(const Tensor<T>& in, const Tensor<T>& w, const T* bias,
                    Tensor<T>& out, Accum acc) {
  check(in.shape.c == w.shape.b,
        "conv2d_adjoint: input " + in.shape.str() + " channel extent " +
            std::to_string(in.shape.c) + " does not match weights " +
            w.shape.str());
  const int64_t cout = w.shape.c;  // adjoint maps w.b -> w.c channels
  const int64_t kh = w.shape.h, kw = w.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const T* wp = w.ptr();
  // out[p,q] = sum in[p-u+ph, q-v+pw] w[o,c,u,v]; with flipped taps this is a
  // direct convolution over planes padded by (kh-1-ph, kw-1-pw).
  auto wat = [=](int64_t o, int64_t c, int64_t u, int64_t v) -> T {
    return wp[((c * cout + o) * kh + (kh - 1 - u)) * kw + (kw - 1 - v)];
  };
  conv_direct(in, kh - 1 - ph, kw - 1 - pw, kh, kw, cout, wat, bias, out, acc);
}

template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gw,
                        Accum acc) {
  const int64_t B = x.shape.b, cin = x.shape.c, H = x.shape.h, W = x.shape.w;
  const int64_t cout = gy.shape.c;
  check(gy.shape.b == B && gy.shape.h == H && gy.shape.w == W,
        "conv2d_weight_grad: mismatched activations " + x.shape.str() +
            " vs " + gy.shape.str());
  check(gw.shape.b == cout && gw.shape.c == cin,
        "conv2d_weight_grad: bad weight shape " + gw.shape.str());
  const int64_t kh = gw.shape.h, kw = gw.shape.w;
  const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  if (acc == Accum::Overwrite) std::fill(gw.data.begin(), gw.data.end(), T(0));

  constexpr int L = VT<T>::lanes;
  const int64_t Hp = H + kh - 1, Wp = padded_width<T>(W, kw);
  const int64_t Wg = round_up(W, L), Wpg = padded_width<T>(W, 1);
  std::vector<T>& xpad = pack_scratch_a<T>();
  std::vector<T>& gpad = pack_scratch_b<T>();
  pack_planes(x, ph, pw, Hp, Wp, xpad);
  pack_planes(gy, 0, 0, H, Wpg, gpad);
  const int64_t xs = Hp * Wp, gs = H * Wpg;

  if (kh == 3 && kw == 3)
    wgrad_k3(xpad.data(), gpad.data(), xs, gs, Wp, Wpg, B, cin, cout, H, Wg,
             gw.ptr());
  else if (kh == 4 && kw == 4)
    wgrad_k4(xpad.data(), gpad.data(), xs, gs, Wp, Wpg, B, cin, cout, H, Wg,
             gw.ptr());
  else
    wgrad_any(xpad.data(), gpad.data(), xs, gs, Wp, Wpg, B, cin, cout, H, Wg,
              kh, kw, gw.ptr());
}

template <typename T>
void channel_sum(const Tensor<T>& t, T* out, Accum acc) {
  const int64_t C = t.shape.c, plane = t.shape.h * t.shape.w;
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    double s = 0;
    for (int64_t b = 0; b < t.shape.b; ++b) {
      const T* p = t.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) s += p[k];
    }
    out[c] = (acc == Accum::Add ? out[c] : T(0)) + static_cast<T>(s);
  }
}

template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        std::vector<uint8_t>& argmax) {
  check(x.shape.h % 2 == 0 && x.shape.w % 2 == 0,
        "maxpool2x2: odd spatial extent " + x.shape.str());
  const int64_t P = x.shape.b * x.shape.c, H = x.shape.h, W = x.shape.w;
  const int64_t Ho = H / 2, Wo = W / 2;
  y = Tensor<T>({x.shape.b, x.shape.c, Ho, Wo});
  argmax.assign(static_cast<size_t>(y.numel()), 0);
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < P; ++p) {
    const T* xp = x.ptr() + p * H * W;
    T* yp = y.ptr() + p * Ho * Wo;
    uint8_t* ap = argmax.data() + p * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        const T* win = xp + 2 * i * W + 2 * j;
        T best = win[0];
        uint8_t arg = 0;
        if (win[1] > best) { best = win[1]; arg = 1; }
        if (win[W] > best) { best = win[W]; arg = 2; }
        if (win[W + 1] > best) { best = win[W + 1]; arg = 3; }
        yp[i * Wo + j] = best;
        ap[i * Wo + j] = arg;
      }
  }
}

template <typename T>
void maxpool2x2_backward(const Tensor<T>& gy, const std::vector<uint8_t>& argmax,
                         Tensor<T>& gx, Accum acc) {
  const int64_t P = gy.shape.b * gy.shape.c, Ho = gy.shape.h, Wo = gy.shape.w;
  const int64_t H = 2 * Ho, W = 2 * Wo;
  if (acc == Accum::Overwrite)
    gx = Tensor<T>({gy.shape.b, gy.shape.c, H, W});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < P; ++p) {
    const T* gp = gy.ptr() + p * Ho * Wo;
    const uint8_t* ap = argmax.data() + p * Ho * Wo;
    T* xp = gx.ptr() + p * H * W;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        const uint8_t a = ap[i * Wo + j];
        xp[(2 * i + a / 2) * W + 2 * j + a % 2] += gp[i * Wo + j];
      }
  }
}

template <typename T>
void upsample2x2_forward(const Tensor<T>& x, Tensor<T>& y) {
  const int64_t P = x.shape.b * x.shape.c, H = x.shape.h, W = x.shape.w;
  y = Tensor<T>({x.shape.b, x.shape.c, 2 * H, 2 * W});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < P; ++p) {
    const T* xp = x.ptr() + p * H * W;
    T* yp = y.ptr() + p * 4 * H * W;
    for (int64_t i = 0; i < H; ++i) {
      T* r0 = yp + (2 * i) * 2 * W;
      T* r1 = r0 + 2 * W;
      for (int64_t j = 0; j < W; ++j) {
        const T v = xp[i * W + j];
        r0[2 * j] = v;
        r0[2 * j + 1] = v;
        r1[2 * j] = v;
        r1[2 * j + 1] = v;
      }
    }
  }
}

template <typename T>
void upsample2x2_backward(const Tensor<T>& gy, Tensor<T>& gx, Accum acc) {
  const int64_t P = gy.shape.b * gy.shape.c, H = gy.shape.h / 2, W = gy.shape.w / 2;
  if (acc == Accum::Overwrite)
    gx = Tensor<T>({gy.shape.b, gy.shape.c, H, W});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < P; ++p) {
    const T* gp = gy.ptr() + p * 4 * H * W;
    T* xp = gx.ptr() + p * H * W;
    for (int64_t i = 0; i < H; ++i) {
      const T* r0 = gp + (2 * i) * 2 * W;
      const T* r1 = r0 + 2 * W;
      for (int64_t j = 0; j < W; ++j)
        xp[i * W + j] += r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
    }
  }
}

template <typename T>
void channel_moments(const Tensor<T>& x, T* mean, T* var) {
  const int64_t C = x.shape.c, plane = x.shape.h * x.shape.w;
  const double n = static_cast<double>(x.shape.b * plane);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    double m = 0;
    for (int64_t b = 0; b < x.shape.b; ++b) {
      const T* p = x.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) m += p[k];
    }
    m /= n;
    double v = 0;
    for (int64_t b = 0; b < x.shape.b; ++b) {
      const T* p = x.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        const double d = p[k] - m;
        v += d * d;
      }
    }
    mean[c] = static_cast<T>(m);
    var[c] = static_cast<T>(v / n);
  }
}

template <typename T>
void batchnorm_apply(const Tensor<T>& x, const T* mean, const T* var,
                     const T* gamma, const T* beta, T eps, Tensor<T>& y) {
  const int64_t C = x.shape.c, plane = x.shape.h * x.shape.w;
  if (y.shape != x.shape) y = Tensor<T>(x.shape);
  const int64_t P = x.shape.b * C;
#pragma omp parallel for schedule(static)
  for (int64_t pc = 0; pc < P; ++pc) {
    const int64_t c = pc % C;
    const T inv = T(1) / std::sqrt(var[c] + eps);
    const T g = gamma[c] * inv, b0 = beta[c] - gamma[c] * inv * mean[c];
    const T* xp = x.ptr() + pc * plane;
    T* yp = y.ptr() + pc * plane;
    for (int64_t k = 0; k < plane; ++k) yp[k] = g * xp[k] + b0;
  }
}

template <typename T>
void batchnorm_backward(const Tensor<T>& x, const T* mean, const T* var,
                        const T* gamma, T eps, const Tensor<T>& gy,
                        Tensor<T>& gx, T* ggamma, T* gbeta, Accum acc) {
  const int64_t B = x.shape.b, C = x.shape.c, plane = x.shape.h * x.shape.w;
  const double n = static_cast<double>(B * plane);
  if (acc == Accum::Overwrite) gx = Tensor<T>(x.shape);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t b = 0; b < B; ++b) {
      const T* xp = x.ptr() + (b * C + c) * plane;
      const T* gp = gy.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        sum_gy += gp[k];
        sum_gy_xhat += gp[k] * (xp[k] - mean[c]) * inv;
      }
    }
    if (acc == Accum::Overwrite) {
      ggamma[c] = 0;
      gbeta[c] = 0;
    }
    ggamma[c] += static_cast<T>(sum_gy_xhat);
    gbeta[c] += static_cast<T>(sum_gy);
    const double k1 = sum_gy / n, k2 = sum_gy_xhat / n;
    for (int64_t b = 0; b < B; ++b) {
      const T* xp = x.ptr() + (b * C + c) * plane;
      const T* gp = gy.ptr() + (b * C + c) * plane;
      T* op = gx.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        const double xhat = (xp[k] - mean[c]) * inv;
        op[k] += static_cast<T>(gamma[c] * inv * (gp[k] - k1 - xhat * k2));
      }
    }
  }
}

template <typename T>
void batchnorm_backward_frozen(const Tensor<T>& x, const T* mean, const T* var,
                               const T* gamma, T eps, const Tensor<T>& gy,
                               Tensor<T>& gx, T* ggamma, T* gbeta, Accum acc) {
  const int64_t B = x.shape.b, C = x.shape.c, plane = x.shape.h * x.shape.w;
  if (acc == Accum::Overwrite) gx = Tensor<T>(x.shape);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t b = 0; b < B; ++b) {
      const T* xp = x.ptr() + (b * C + c) * plane;
      const T* gp = gy.ptr() + (b * C + c) * plane;
      T* op = gx.ptr() + (b * C + c) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        sum_gy += gp[k];
        sum_gy_xhat += gp[k] * (xp[k] - mean[c]) * inv;
        op[k] += static_cast<T>(gamma[c] * inv * gp[k]);
      }
    }
    if (acc == Accum::Overwrite) {
      ggamma[c] = 0;
      gbeta[c] = 0;
    }
    ggamma[c] += static_cast<T>(sum_gy_xhat);
    gbeta[c] += static_cast<T>(sum_gy);
  }
}

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (y.shape != x.shape) y = Tensor<T>(x.shape);
  const int64_t n = x.numel();
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) yp[k] = xp[k] > T(0) ? xp[k] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx,
                   Accum acc) {
  if (acc == Accum::Overwrite) gx = Tensor<T>(x.shape);
  const int64_t n = x.numel();
  const T* xp = x.ptr();
  const T* gp = gy.ptr();
  T* op = gx.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) op[k] += xp[k] > T(0) ? gp[k] : T(0);
}

template <typename T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (y.shape != x.shape) y = Tensor<T>(x.shape);
  const int64_t n = x.numel();
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) yp[k] = T(1) / (T(1) + std::exp(-xp[k]));
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx,
                      Accum acc) {
  if (acc == Accum::Overwrite) gx = Tensor<T>(y.shape);
  const int64_t n = y.numel();
  const T* yp = y.ptr();
  const T* gp = gy.ptr();
  T* op = gx.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) op[k] += gp[k] * yp[k] * (T(1) - yp[k]);
}

template <typename T>
void dropout_forward(const Tensor<T>& x, double p, Rng& rng, Tensor<T>& y,
                     std::vector<uint8_t>& mask) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  const int64_t n = x.numel();
  if (y.shape != x.shape) y = Tensor<T>(x.shape);
  mask.resize(static_cast<size_t>(n));
  // draws are sequential in element order so the stream is reproducible
  for (int64_t k = 0; k < n; ++k) mask[k] = rng.uniform() >= p ? 1 : 0;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) yp[k] = mask[k] ? xp[k] * scale : T(0);
}

template <typename T>
void dropout_backward(const Tensor<T>& gy, const std::vector<uint8_t>& mask,
                      double p, Tensor<T>& gx, Accum acc) {
  if (acc == Accum::Overwrite) gx = Tensor<T>(gy.shape);
  const int64_t n = gy.numel();
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  const T* gp = gy.ptr();
  T* op = gx.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < n; ++k) op[k] += mask[k] ? gp[k] * scale : T(0);
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
                                   T*, T*, Accum);                             \
  template void batchnorm_backward_frozen(const Tensor<T>&, const T*,         \
                                          const T*, const T*, T,              \
                                          const Tensor<T>&, Tensor<T>&, T*,   \
                                          T*, Accum);                          \
  template void relu_forward(const Tensor<T>&, Tensor<T>&);                    \
  template void relu_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&, \
                              Accum);                                          \
  template void sigmoid_forward(const Tensor<T>&, Tensor<T>&);                 \
  template void sigmoid_backward(const Tensor<T>&, const Tensor<T>&,          \
                                 Tensor<T>&, Accum);                           \
  template void dropout_forward(const Tensor<T>&, double, Rng&, Tensor<T>&,   \
                                std::vector<uint8_t>&);                        \
  template void dropout_backward(const Tensor<T>&,                             \
                                 const std::vector<uint8_t>&, double,         \
                                 Tensor<T>&, Accum);

CDNN_INSTANTIATE(float)
CDNN_INSTANTIATE(double)
#undef CDNN_INSTANTIATE

}  // namespace cdnn::kernels
