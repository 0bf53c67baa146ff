#include "cdnn/color.hpp"

#include <algorithm>
#include <cmath>

namespace cdnn {

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out{0.0, 0.0, mx};
  if (d <= 0.0) return out;  // achromatic
  out.s = d / mx;
  double h;
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
  out.h = h;
  return out;
}

namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

}  // namespace

double rgb_to_lab_l(double r, double g, double b) {
  // Y relative to D65 white; the L* formula needs only this component
  const double y = 0.2126729 * srgb_to_linear(r) +
                   0.7151522 * srgb_to_linear(g) +
                   0.0721750 * srgb_to_linear(b);
  const double e = 216.0 / 24389.0;  // (6/29)^3
  const double k = 24389.0 / 27.0;
  const double fy = y > e ? std::cbrt(y) : (k * y + 16.0) / 116.0;
  const double lstar = 116.0 * fy - 16.0;
  return std::clamp(lstar / 100.0, 0.0, 1.0);
}

}  // namespace cdnn
