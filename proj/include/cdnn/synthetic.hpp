#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdnn/manifest.hpp"

namespace cdnn {

// Desk-scale stand-in corpus: skin-toned backgrounds with a smooth shading
// gradient, one darker elliptical lesion per image with a soft rim, optional
// hair-like strokes and a vignette. Writes img-NNN.ppm, msk-NNN.pgm, and
// manifest.txt into out_dir and returns the manifest entries. The mask is
// the exact ellipse support. Image i draws from substream(seed, i), so the
// corpus is reproducible file for file.
std::vector<ManifestEntry> generate_synthetic(int n, int64_t h, int64_t w,
                                              uint64_t seed,
                                              const std::string& out_dir);

}  // namespace cdnn
