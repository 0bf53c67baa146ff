#include "cdnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cdnn/netpbm.hpp"
#include "cdnn/rng.hpp"

namespace cdnn {
namespace {

struct Rgb {
  double r, g, b;
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// one lesion image plus its exact mask
void render(int64_t h, int64_t w, Rng& rng, RawImage& img, GrayImage& msk) {
  img.h = h;
  img.w = w;
  img.rgb.assign(size_t(h * w * 3), 0);
  msk.h = h;
  msk.w = w;
  msk.maxval = 255;
  msk.v.assign(size_t(h * w), 0);

  const Rgb skin{0.72 + 0.18 * rng.uniform(), 0.50 + 0.15 * rng.uniform(),
                 0.42 + 0.12 * rng.uniform()};
  const double gdir = 2.0 * 3.14159265358979 * rng.uniform();
  const double gamp = 0.08 * rng.uniform();

  // ellipse kept fully inside the frame
  const double cy = (0.35 + 0.30 * rng.uniform()) * double(h);
  const double cx = (0.35 + 0.30 * rng.uniform()) * double(w);
  double ay = (0.14 + 0.14 * rng.uniform()) * double(h);
  double ax = (0.14 + 0.14 * rng.uniform()) * double(w);
  const double th = 3.14159265358979 * rng.uniform();
  const double cth = std::cos(th), sth = std::sin(th);
  {
    const double by = std::hypot(ay * cth, ax * sth);
    const double bx = std::hypot(ay * sth, ax * cth);
    const double fit = std::min(
        {1.0, (cy - 2.0) / by, (double(h) - 3.0 - cy) / by, (cx - 2.0) / bx,
         (double(w) - 3.0 - cx) / bx});
    ay *= fit;
    ax *= fit;
  }

  const Rgb lesion{0.20 + 0.16 * rng.uniform(), 0.12 + 0.11 * rng.uniform(),
                   0.09 + 0.09 * rng.uniform()};
  const double flat = 0.55 + 0.20 * rng.uniform();  // rim starts here
  const double rim = 0.30;                          // blend left at the edge

  std::vector<double> pix(size_t(h * w * 3));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const double gy = (double(i) / double(h - 1)) - 0.5;
      const double gx = (double(j) / double(w - 1)) - 0.5;
      const double shade = gamp * (gx * std::cos(gdir) + gy * std::sin(gdir));

      const double dy = double(i) - cy, dx = double(j) - cx;
      const double ey = (dy * cth + dx * sth) / ay;
      const double ex = (-dy * sth + dx * cth) / ax;
      const double r2 = ey * ey + ex * ex;

      double blend = 0.0;
      if (r2 <= 1.0) {
        const double r = std::sqrt(r2);
        msk.v[size_t(i * w + j)] = 255;
        if (r <= flat) {
          blend = 1.0;
        } else {
          const double u = (r - flat) / (1.0 - flat);
          blend = rim + (1.0 - rim) * 0.5 * (1.0 + std::cos(3.14159265358979 * u));
        }
      }
      const size_t p = size_t((i * w + j) * 3);
      pix[p + 0] = skin.r + shade - blend * (skin.r + shade - lesion.r);
      pix[p + 1] = skin.g + shade - blend * (skin.g + shade - lesion.g);
      pix[p + 2] = skin.b + shade - blend * (skin.b + shade - lesion.b);
    }

  // hair strokes: quadratic arcs one pixel wide
  const int hairs = int(rng.uniform_int(4));
  for (int s = 0; s < hairs; ++s) {
    const double x0 = rng.uniform() * double(w - 1);
    const double y0 = rng.uniform() * double(h - 1);
    const double x2 = rng.uniform() * double(w - 1);
    const double y2 = rng.uniform() * double(h - 1);
    const double x1 = rng.uniform() * double(w - 1);
    const double y1 = rng.uniform() * double(h - 1);
    const double dark = 0.08 + 0.10 * rng.uniform();
    const double alpha = 0.55;
    const int steps = int(2 * (h + w));
    for (int t = 0; t <= steps; ++t) {
      const double u = double(t) / double(steps);
      const double a = (1 - u) * (1 - u), b = 2 * u * (1 - u), c = u * u;
      const int64_t y = std::llround(a * y0 + b * y1 + c * y2);
      const int64_t x = std::llround(a * x0 + b * x1 + c * x2);
      if (y < 0 || y >= h || x < 0 || x >= w) continue;
      const size_t p = size_t((y * w + x) * 3);
      for (int ch = 0; ch < 3; ++ch)
        pix[p + ch] = (1 - alpha) * pix[p + ch] + alpha * dark;
    }
  }

  const double vig = 0.22 * rng.uniform();
  const double dmax = 0.25 * (double(h) * double(h) + double(w) * double(w));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const double dy = double(i) - 0.5 * double(h);
      const double dx = double(j) - 0.5 * double(w);
      const double fade = 1.0 - vig * (dy * dy + dx * dx) / dmax;
      const size_t p = size_t((i * w + j) * 3);
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = 0.015 * (2.0 * rng.uniform() - 1.0);
        img.rgb[p + size_t(ch)] =
            uint8_t(std::lround(255.0 * clamp01(pix[p + size_t(ch)] * fade + noise)));
      }
    }
}

}  // namespace

std::vector<ManifestEntry> generate_synthetic(int n, int64_t h, int64_t w,
                                              uint64_t seed,
                                              const std::string& out_dir) {
  if (n < 1) throw std::runtime_error("generate_synthetic: n must be >= 1");
  check(h >= 16 && w >= 16, "generate_synthetic: extents too small");
  std::filesystem::create_directories(out_dir);

  std::vector<ManifestEntry> entries;
  std::string manifest;
  char name[64];
  for (int i = 0; i < n; ++i) {
    Rng rng(Rng::substream(seed, uint64_t(i)));
    RawImage img;
    GrayImage msk;
    render(h, w, rng, img, msk);

    std::snprintf(name, sizeof name, "img-%03d.ppm", i);
    const std::string img_name = name;
    std::snprintf(name, sizeof name, "msk-%03d.pgm", i);
    const std::string msk_name = name;

    write_ppm(img, out_dir + "/" + img_name);
    Tensor<float> plane({1, 1, h, w});
    for (int64_t k = 0; k < h * w; ++k)
      plane.data[k] = msk.v[size_t(k)] ? 1.0f : 0.0f;
    write_pgm_mask(plane, out_dir + "/" + msk_name);

    manifest += img_name + "," + msk_name + "\n";
    ManifestEntry e;
    e.image = out_dir + "/" + img_name;
    e.mask = out_dir + "/" + msk_name;
    e.name = std::filesystem::path(img_name).stem().string();
    entries.push_back(std::move(e));
  }

  const std::string mpath = out_dir + "/manifest.txt";
  const std::string tmp = mpath + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f << manifest;
    if (!f) throw std::runtime_error("cannot write " + mpath);
  }
  std::filesystem::rename(tmp, mpath);
  return entries;
}

}  // namespace cdnn
