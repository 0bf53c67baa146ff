#pragma once
#include <cstdint>
#include <optional>
#include <vector>

#include "cdnn/tensor.hpp"

// Probability map to binary mask conversion. All functions are pure and take
// single-plane (1,1,H,W) tensors; maps hold values in [0,1], masks in {0,1}.
namespace cdnn {

struct Pixel {
  int64_t y = 0;
  int64_t x = 0;
  bool operator==(const Pixel&) const = default;
};

// Dense component labels 1..count in scan order of first encounter, 0 is
// background. Equal labels mean 8-connected-reachable.
struct LabelMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<int32_t> label;
  int32_t count = 0;
  int32_t at(int64_t i, int64_t j) const {
    return label[size_t(i * w + j)];
  }
};

// Boundary inclusive: mask = 1 where value >= th.
Tensor<float> threshold(const Tensor<float>& map, float th);

LabelMap connected_components(const Tensor<float>& mask);

// Probability-weighted centroid (rounded to nearest pixel) of the component
// of threshold(map, th_h) with the largest mass, where mass is the sum of
// map values over the component. Empty optional when nothing clears th_h.
std::optional<Pixel> find_center(const Tensor<float>& map, float th_h = 0.8f);

// 3x3 dilation, then removal of background regions not reachable from the
// image border (4-connected flood on the complement), then 3x3 erosion with
// out-of-bounds treated as foreground. Closes interior holes up to the
// structuring scale and never discards a foreground pixel.
Tensor<float> fill_holes(const Tensor<float>& mask);

// Final mask: the hole-filled component of threshold(map, th_l) that
// contains find_center(map, th_h). When the center is missing or lands in
// no component, the largest-mass low component is used instead; an empty
// low mask yields an empty mask. Output is one 8-connected region or empty.
Tensor<float> dual_threshold_segment(const Tensor<float>& map,
                                     float th_h = 0.8f, float th_l = 0.5f);

// Pixelwise arithmetic mean; all maps must share extents.
Tensor<float> ensemble_average(const std::vector<Tensor<float>>& maps);

}  // namespace cdnn
