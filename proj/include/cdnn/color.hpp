#pragma once

namespace cdnn {

// all components in [0,1]; hue is degrees/360 with the achromatic case
// pinned to h=0, s=0
struct Hsv {
  double h, s, v;
};

Hsv rgb_to_hsv(double r, double g, double b);

// CIELAB L* under D65 from sRGB-encoded components, scaled to [0,1]
double rgb_to_lab_l(double r, double g, double b);

}  // namespace cdnn
