#pragma once

#include "cdnn/netpbm.hpp"
#include "cdnn/tensor.hpp"

namespace cdnn {

// 7-plane network input (1,7,out_h,out_w): R, G, B, H, S, V, L in that
// order, every value in [0,1]. Color conversion happens at the source
// resolution; the resize comes last.
Tensor<float> preprocess(const RawImage& img, int64_t out_h = 192,
                         int64_t out_w = 256);

// binary (1,1,out_h,out_w) mask: foreground where sample > maxval/2,
// resized by nearest neighbour so it stays binary
Tensor<float> preprocess_mask(const GrayImage& g, int64_t out_h = 192,
                              int64_t out_w = 256);

}  // namespace cdnn
