// Times the production convolution kernels against the serial reference on
// the layer shapes the network actually runs, and reports GFLOP/s.
// Usage: bench_kernels [--full]   (--full adds the serial timings, slow)

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "cdnn/kernels.hpp"
#include "cdnn/rng.hpp"

using namespace cdnn;
using namespace cdnn::kernels;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

struct BenchCase {
  const char* name;
  Shape4 xs, ws;
};

}  // namespace

int main(int argc, char** argv) {
  const bool full = argc > 1 && std::strcmp(argv[1], "--full") == 0;

  // batch-16 training shapes at 96x128 plus one full-resolution inference row
  const BenchCase cases[] = {
      {"enc 16x96x128 k3 c7->16", {16, 7, 96, 128}, {16, 7, 3, 3}},
      {"enc 16x48x64  k3 c64", {16, 64, 48, 64}, {64, 64, 3, 3}},
      {"enc 16x24x32  k4 c128", {16, 128, 24, 32}, {128, 128, 4, 4}},
      {"enc 16x12x16  k3 c256", {16, 256, 12, 16}, {256, 256, 3, 3}},
      {"mid 16x6x8    k3 c512", {16, 512, 6, 8}, {512, 512, 3, 3}},
      {"infer 1x192x256 k3 c32", {1, 32, 192, 256}, {32, 32, 3, 3}},
  };

  std::printf("%-26s %10s %10s %10s %10s\n", "case", "fwd GF/s", "adj GF/s",
              "wgrad GF/s", "serial GF/s");
  Rng rng(1);
  for (const auto& c : cases) {
    Tensor<float> x(c.xs), w(c.ws);
    Tensor<float> gy({c.xs.b, c.ws.b, c.xs.h, c.xs.w});
    for (auto& v : x.data) v = float(rng.uniform(-1, 1));
    for (auto& v : w.data) v = float(rng.uniform(-1, 1));
    for (auto& v : gy.data) v = float(rng.uniform(-1, 1));
    const double flops = 2.0 * c.xs.b * c.ws.b * c.ws.c * c.xs.h * c.xs.w *
                         c.ws.h * c.ws.w;

    Tensor<float> y, a;
    Tensor<float> gw(c.ws);
    const double tf = time_best_of(3, [&] {
      conv2d_forward(x, w, static_cast<const float*>(nullptr), y);
    });
    const double ta = time_best_of(3, [&] {
      conv2d_adjoint(gy, w, static_cast<const float*>(nullptr), a);
    });
    const double tw = time_best_of(3, [&] { conv2d_weight_grad(x, gy, gw); });

    double ts = 0;
    if (full) {
      Tensor<float> ys;
      ts = time_best_of(1, [&] {
        serial::conv2d_forward(x, w, static_cast<const float*>(nullptr), ys);
      });
    }
    std::printf("%-26s %10.1f %10.1f %10.1f", c.name, flops / tf * 1e-9,
                flops / ta * 1e-9, flops / tw * 1e-9);
    if (full)
      std::printf(" %10.1f\n", flops / ts * 1e-9);
    else
      std::printf(" %10s\n", "-");
  }
  return 0;
}
