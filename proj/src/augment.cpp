#include "cdnn/augment.hpp"

#include <algorithm>
#include <cmath>

namespace cdnn {

GeomSample sample_geom(const AugmentConfig& cfg, int64_t h, int64_t w,
                       Rng& rng) {
  GeomSample g;
  g.flip_h = rng.bernoulli(cfg.flip_prob);
  g.flip_v = rng.bernoulli(cfg.flip_prob);
  g.shift_x = rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac) * double(w);
  g.shift_y = rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac) * double(h);
  const double amax = cfg.max_rotate_deg * (3.14159265358979323846 / 180.0);
  g.angle = rng.uniform(-amax, amax);
  g.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  return g;
}

namespace {

template <typename T>
double bilinear_at(const T* plane, int64_t h, int64_t w, double y, double x) {
  const int64_t i0 = int64_t(std::floor(y));
  const int64_t j0 = int64_t(std::floor(x));
  const double fy = y - double(i0);
  const double fx = x - double(j0);
  auto tap = [&](int64_t i, int64_t j) -> double {
    return (i >= 0 && i < h && j >= 0 && j < w) ? double(plane[i * w + j])
                                                : 0.0;
  };
  return (1 - fy) * ((1 - fx) * tap(i0, j0) + fx * tap(i0, j0 + 1)) +
         fy * ((1 - fx) * tap(i0 + 1, j0) + fx * tap(i0 + 1, j0 + 1));
}

template <typename T>
double nearest_at(const T* plane, int64_t h, int64_t w, double y, double x) {
  const int64_t i = std::lround(y);
  const int64_t j = std::lround(x);
  return (i >= 0 && i < h && j >= 0 && j < w) ? double(plane[i * w + j]) : 0.0;
}

// source coordinates for output pixel (i, j): undo shift, rotation, scale,
// flip in that order, all about the center
struct InverseMap {
  double cy, cx, cosa, sina, inv_scale, sx, sy;
  bool fh, fv;

  explicit InverseMap(const GeomSample& g, int64_t h, int64_t w)
      : cy((double(h) - 1) / 2),
        cx((double(w) - 1) / 2),
        cosa(std::cos(g.angle)),
        sina(std::sin(g.angle)),
        inv_scale(1.0 / g.scale),
        sx(g.shift_x),
        sy(g.shift_y),
        fh(g.flip_h),
        fv(g.flip_v) {}

  void src(int64_t i, int64_t j, double* y, double* x) const {
    const double dx = double(j) - cx - sx;
    const double dy = double(i) - cy - sy;
    double rx = (cosa * dx + sina * dy) * inv_scale;
    double ry = (-sina * dx + cosa * dy) * inv_scale;
    if (fh) rx = -rx;
    if (fv) ry = -ry;
    *y = cy + ry;
    *x = cx + rx;
  }
};

}  // namespace

template <typename T>
void apply_geom(const Tensor<T>& image, const Tensor<T>& mask,
                const GeomSample& g, Tensor<T>& image_out,
                Tensor<T>& mask_out) {
  check(image.shape.h == mask.shape.h && image.shape.w == mask.shape.w,
        "apply_geom: image and mask extents differ");
  if (!(image_out.shape == image.shape)) image_out = Tensor<T>(image.shape);
  if (!(mask_out.shape == mask.shape)) mask_out = Tensor<T>(mask.shape);

  const int64_t h = image.shape.h, w = image.shape.w;
  const InverseMap inv(g, h, w);
  const int64_t iplanes = image.shape.b * image.shape.c;
  const int64_t mplanes = mask.shape.b * mask.shape.c;

#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double sy, sx;
      inv.src(i, j, &sy, &sx);
      for (int64_t p = 0; p < iplanes; ++p)
        image_out.data[(p * h + i) * w + j] =
            T(bilinear_at(image.ptr() + p * h * w, h, w, sy, sx));
      for (int64_t p = 0; p < mplanes; ++p)
        mask_out.data[(p * h + i) * w + j] =
            T(nearest_at(mask.ptr() + p * h * w, h, w, sy, sx));
    }
  }
}

template <typename T>
void augment_contrast(Tensor<T>& image, const AugmentConfig& cfg, Rng& rng) {
  const int64_t planes = image.shape.b * image.shape.c;
  const int64_t hw = image.shape.h * image.shape.w;
  for (int64_t p = 0; p < planes; ++p) {
    const double gain = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
    T* v = image.ptr() + p * hw;
    double sum = 0;
    for (int64_t k = 0; k < hw; ++k) sum += double(v[k]);
    const double mean = sum / double(hw);
    for (int64_t k = 0; k < hw; ++k)
      v[k] = T(std::clamp(mean + gain * (double(v[k]) - mean), 0.0, 1.0));
  }
}

template <typename T>
void augment(const Tensor<T>& image, const Tensor<T>& mask,
             const AugmentConfig& cfg, Rng& rng, Tensor<T>& image_out,
             Tensor<T>& mask_out) {
  const GeomSample g = sample_geom(cfg, image.shape.h, image.shape.w, rng);
  apply_geom(image, mask, g, image_out, mask_out);
  augment_contrast(image_out, cfg, rng);
}

#define CDNN_AUG_INSTANTIATE(T)                                             \
  template void apply_geom<T>(const Tensor<T>&, const Tensor<T>&,           \
                              const GeomSample&, Tensor<T>&, Tensor<T>&);   \
  template void augment_contrast<T>(Tensor<T>&, const AugmentConfig&,      \
                                    Rng&);                                  \
  template void augment<T>(const Tensor<T>&, const Tensor<T>&,             \
                           const AugmentConfig&, Rng&, Tensor<T>&,          \
                           Tensor<T>&);

CDNN_AUG_INSTANTIATE(float)
CDNN_AUG_INSTANTIATE(double)

}  // namespace cdnn
