#pragma once

#include "cdnn/rng.hpp"
#include "cdnn/tensor.hpp"

namespace cdnn {

struct AugmentConfig {
  double flip_prob = 0.5;  // per axis
  double max_shift_frac = 0.1;
  double max_rotate_deg = 30.0;
  double scale_lo = 0.8, scale_hi = 1.25;
  double contrast_lo = 0.7, contrast_hi = 1.3;
};

// One sampled geometric transform, applied about the image center as
// flip, then scale, then rotate, then shift. Defaults are the identity.
struct GeomSample {
  bool flip_h = false, flip_v = false;
  double shift_x = 0.0, shift_y = 0.0;  // pixels
  double angle = 0.0;                   // radians
  double scale = 1.0;
};

GeomSample sample_geom(const AugmentConfig& cfg, int64_t h, int64_t w,
                       Rng& rng);

// Applies the same transform to every plane: bilinear resampling for the
// image, nearest-neighbour for the mask so it stays binary. Out-of-frame
// samples are 0.
template <typename T>
void apply_geom(const Tensor<T>& image, const Tensor<T>& mask,
                const GeomSample& g, Tensor<T>& image_out,
                Tensor<T>& mask_out);

// v <- clamp(mean + gain * (v - mean), 0, 1) per plane, gain drawn fresh
// for each channel
template <typename T>
void augment_contrast(Tensor<T>& image, const AugmentConfig& cfg, Rng& rng);

// geometry plus contrast with a fresh sample; the rng draw order is fixed
// (flips, shifts, angle, scale, then one gain per channel)
template <typename T>
void augment(const Tensor<T>& image, const Tensor<T>& mask,
             const AugmentConfig& cfg, Rng& rng, Tensor<T>& image_out,
             Tensor<T>& mask_out);

}  // namespace cdnn
