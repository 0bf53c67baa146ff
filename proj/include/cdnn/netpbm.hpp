#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdnn/tensor.hpp"

namespace cdnn {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// binary PPM (P6) pixels, row-major RGB triplets
struct RawImage {
  int64_t w = 0, h = 0;
  std::vector<uint8_t> rgb;
};

// binary PGM (P5); samples are 1 byte up to maxval 255, 2 bytes big-endian
// above that
struct GrayImage {
  int64_t w = 0, h = 0;
  int maxval = 255;
  std::vector<uint16_t> v;
};

RawImage read_ppm(const std::string& path);
GrayImage read_pgm(const std::string& path);

// mask (1,1,H,W) of {0,1} written as P5 maxval 255 with values {0,255};
// writes are atomic (temp file then rename)
void write_pgm_mask(const Tensor<float>& mask, const std::string& path);

// probability map (1,1,H,W) in [0,1] written as P5 maxval 65535
void write_pgm16(const Tensor<float>& map, const std::string& path);

void write_ppm(const RawImage& img, const std::string& path);

// foreground where sample > maxval/2
Tensor<float> mask_tensor(const GrayImage& g);

}  // namespace cdnn
