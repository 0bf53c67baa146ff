#pragma once
#include <string>
#include <vector>

#include "cdnn/train.hpp"

namespace cdnn {

// One corpus record: image and mask paths plus the image stem, which names
// the item in reports and prediction files.
struct ManifestEntry {
  std::string image;
  std::string mask;
  std::string name;
};

// Text manifest, one "image.ppm,mask.pgm" pair per line. Relative paths are
// resolved against the manifest's directory. Blank lines are skipped; a line
// with no comma, a duplicate stem, or an empty file is an error.
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Reads and preprocesses every entry: 7-channel image planes and binarized
// mask, both resized to h by w.
Dataset load_dataset(const std::vector<ManifestEntry>& entries, int64_t h,
                     int64_t w);

}  // namespace cdnn
