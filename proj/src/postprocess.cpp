#include "cdnn/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cdnn {
namespace {

void check_plane(const Tensor<float>& t, const char* what) {
  check(t.shape.b == 1 && t.shape.c == 1 && t.shape.h > 0 && t.shape.w > 0,
        std::string(what) + " expects a (1,1,H,W) plane");
}

bool fg(const Tensor<float>& m, int64_t i, int64_t j) {
  return m.data[size_t(i * m.shape.w + j)] != 0.0f;
}

Tensor<float> dilate3(const Tensor<float>& m) {
  const int64_t h = m.shape.h, w = m.shape.w;
  Tensor<float> out(m.shape, 0.0f);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      bool hit = false;
      for (int64_t di = -1; di <= 1 && !hit; ++di)
        for (int64_t dj = -1; dj <= 1 && !hit; ++dj) {
          const int64_t y = i + di, x = j + dj;
          if (y >= 0 && y < h && x >= 0 && x < w && fg(m, y, x)) hit = true;
        }
      if (hit) out.data[size_t(i * w + j)] = 1.0f;
    }
  return out;
}

// out of bounds counts as foreground so border pixels survive closing
Tensor<float> erode3(const Tensor<float>& m) {
  const int64_t h = m.shape.h, w = m.shape.w;
  Tensor<float> out(m.shape, 0.0f);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      bool all = true;
      for (int64_t di = -1; di <= 1 && all; ++di)
        for (int64_t dj = -1; dj <= 1 && all; ++dj) {
          const int64_t y = i + di, x = j + dj;
          if (y >= 0 && y < h && x >= 0 && x < w && !fg(m, y, x)) all = false;
        }
      if (all) out.data[size_t(i * w + j)] = 1.0f;
    }
  return out;
}

// single-component mask for one label
Tensor<float> pick_label(const LabelMap& lm, int32_t k) {
  Tensor<float> out({1, 1, lm.h, lm.w}, 0.0f);
  for (size_t p = 0; p < lm.label.size(); ++p)
    if (lm.label[p] == k) out.data[int64_t(p)] = 1.0f;
  return out;
}

}  // namespace

Tensor<float> threshold(const Tensor<float>& map, float th) {
  check_plane(map, "threshold");
  check(th > 0.0f && th < 1.0f, "threshold must lie strictly inside (0,1)");
  Tensor<float> out(map.shape, 0.0f);
  for (int64_t k = 0; k < map.numel(); ++k)
    if (map.data[k] >= th) out.data[k] = 1.0f;
  return out;
}

LabelMap connected_components(const Tensor<float>& mask) {
  check_plane(mask, "connected_components");
  LabelMap lm;
  lm.h = mask.shape.h;
  lm.w = mask.shape.w;
  lm.label.assign(size_t(lm.h * lm.w), 0);
  std::vector<int64_t> stack;
  for (int64_t i = 0; i < lm.h; ++i)
    for (int64_t j = 0; j < lm.w; ++j) {
      const size_t p = size_t(i * lm.w + j);
      if (!fg(mask, i, j) || lm.label[p] != 0) continue;
      const int32_t k = ++lm.count;
      lm.label[p] = k;
      stack.assign(1, int64_t(p));
      while (!stack.empty()) {
        const int64_t q = stack.back();
        stack.pop_back();
        const int64_t y = q / lm.w, x = q % lm.w;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= lm.h || nx < 0 || nx >= lm.w) continue;
            const size_t np = size_t(ny * lm.w + nx);
            if (fg(mask, ny, nx) && lm.label[np] == 0) {
              lm.label[np] = k;
              stack.push_back(int64_t(np));
            }
          }
      }
    }
  return lm;
}

std::optional<Pixel> find_center(const Tensor<float>& map, float th_h) {
  const Tensor<float> high = threshold(map, th_h);
  const LabelMap lm = connected_components(high);
  if (lm.count == 0) return std::nullopt;
  std::vector<double> mass(size_t(lm.count) + 1, 0.0);
  for (size_t p = 0; p < lm.label.size(); ++p)
    if (lm.label[p] != 0)
      mass[size_t(lm.label[p])] += double(map.data[int64_t(p)]);
  int32_t best = 1;
  for (int32_t k = 2; k <= lm.count; ++k)
    if (mass[size_t(k)] > mass[size_t(best)]) best = k;
  double sy = 0, sx = 0, sp = 0;
  for (int64_t i = 0; i < lm.h; ++i)
    for (int64_t j = 0; j < lm.w; ++j)
      if (lm.at(i, j) == best) {
        const double p = double(map.data[i * lm.w + j]);
        sy += p * double(i);
        sx += p * double(j);
        sp += p;
      }
  return Pixel{std::lround(sy / sp), std::lround(sx / sp)};
}

Tensor<float> fill_holes(const Tensor<float>& mask) {
  check_plane(mask, "fill_holes");
  const int64_t h = mask.shape.h, w = mask.shape.w;
  Tensor<float> big = dilate3(mask);

  // flood the complement from the border; 4-connectivity is the dual of the
  // 8-connected foreground, so diagonal chains stay airtight
  std::vector<uint8_t> outside(size_t(h * w), 0);
  std::vector<int64_t> stack;
  auto seed = [&](int64_t i, int64_t j) {
    const size_t p = size_t(i * w + j);
    if (!fg(big, i, j) && !outside[p]) {
      outside[p] = 1;
      stack.push_back(int64_t(p));
    }
  };
  for (int64_t j = 0; j < w; ++j) {
    seed(0, j);
    seed(h - 1, j);
  }
  for (int64_t i = 0; i < h; ++i) {
    seed(i, 0);
    seed(i, w - 1);
  }
  while (!stack.empty()) {
    const int64_t q = stack.back();
    stack.pop_back();
    const int64_t y = q / w, x = q % w;
    if (y > 0) seed(y - 1, x);
    if (y + 1 < h) seed(y + 1, x);
    if (x > 0) seed(y, x - 1);
    if (x + 1 < w) seed(y, x + 1);
  }
  for (int64_t k = 0; k < big.numel(); ++k)
    if (!outside[size_t(k)]) big.data[k] = 1.0f;

  return erode3(big);
}

Tensor<float> dual_threshold_segment(const Tensor<float>& map, float th_h,
                                     float th_l) {
  check_plane(map, "dual_threshold_segment");
  const Tensor<float> low = threshold(map, th_l);
  const LabelMap lm = connected_components(low);
  if (lm.count == 0) return Tensor<float>(map.shape, 0.0f);

  std::vector<Tensor<float>> filled(size_t(lm.count) + 1);
  std::vector<double> mass(size_t(lm.count) + 1, 0.0);
  for (int32_t k = 1; k <= lm.count; ++k)
    filled[size_t(k)] = fill_holes(pick_label(lm, k));
  for (size_t p = 0; p < lm.label.size(); ++p)
    if (lm.label[p] != 0)
      mass[size_t(lm.label[p])] += double(map.data[int64_t(p)]);

  if (const auto c = find_center(map, th_h)) {
    for (int32_t k = 1; k <= lm.count; ++k)
      if (fg(filled[size_t(k)], c->y, c->x)) return filled[size_t(k)];
  }
  int32_t best = 1;
  for (int32_t k = 2; k <= lm.count; ++k)
    if (mass[size_t(k)] > mass[size_t(best)]) best = k;
  return filled[size_t(best)];
}

Tensor<float> ensemble_average(const std::vector<Tensor<float>>& maps) {
  check(!maps.empty(), "ensemble_average needs at least one map");
  for (const auto& m : maps)
    check(m.shape == maps[0].shape, "ensemble_average: extents differ");
  Tensor<float> out(maps[0].shape, 0.0f);
  const double inv = 1.0 / double(maps.size());
  for (int64_t k = 0; k < out.numel(); ++k) {
    double s = 0;
    for (const auto& m : maps) s += double(m.data[k]);
    out.data[k] = float(s * inv);
  }
  return out;
}

}  // namespace cdnn
