#include "cdnn/preprocess.hpp"

#include "cdnn/color.hpp"
#include "cdnn/resize.hpp"

namespace cdnn {

Tensor<float> preprocess(const RawImage& img, int64_t out_h, int64_t out_w) {
  check(img.w >= 1 && img.h >= 1 &&
            img.rgb.size() == size_t(img.w) * size_t(img.h) * 3,
        "preprocess: inconsistent raw image");

  const int64_t h = img.h, w = img.w, hw = h * w;
  Tensor<float> full({1, 7, h, w});
  float* planes = full.ptr();
  for (int64_t k = 0; k < hw; ++k) {
    const double r = img.rgb[size_t(3 * k)] / 255.0;
    const double g = img.rgb[size_t(3 * k + 1)] / 255.0;
    const double b = img.rgb[size_t(3 * k + 2)] / 255.0;
    const Hsv hsv = rgb_to_hsv(r, g, b);
    planes[0 * hw + k] = float(r);
    planes[1 * hw + k] = float(g);
    planes[2 * hw + k] = float(b);
    planes[3 * hw + k] = float(hsv.h);
    planes[4 * hw + k] = float(hsv.s);
    planes[5 * hw + k] = float(hsv.v);
    planes[6 * hw + k] = float(rgb_to_lab_l(r, g, b));
  }
  return resize_bilinear(full, out_h, out_w);
}

Tensor<float> preprocess_mask(const GrayImage& g, int64_t out_h,
                              int64_t out_w) {
  return resize_nearest(mask_tensor(g), out_h, out_w);
}

}  // namespace cdnn
