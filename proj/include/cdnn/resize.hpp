#pragma once

#include "cdnn/tensor.hpp"

namespace cdnn {

// Half-pixel-center bilinear resampling: src = (dst + 0.5) * in/out - 0.5,
// clamped to the frame, applied per plane. Output values are convex
// combinations of inputs. A 1-pixel extent degenerates to nearest.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int64_t out_h, int64_t out_w);

// same coordinate mapping, rounded to the nearest source pixel (masks)
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& in, int64_t out_h, int64_t out_w);

}  // namespace cdnn
