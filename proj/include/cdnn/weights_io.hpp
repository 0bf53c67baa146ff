#pragma once

#include <stdexcept>
#include <string>

#include "cdnn/network.hpp"

namespace cdnn {

// Weight file layout, all integers little-endian:
//   magic "CDNN", u32 version (currently 1), u32 record count,
//   then per record: u32 name length, name bytes, u32 rank, rank extents
//   (u32 each), extent-product f32 payload.
// Records follow layer order; each parameter row contributes "<layer>.w" and
// ".b", and batchnorm rows add ".gamma", ".beta", ".run_mean", ".run_var".
// Running stats ride along for inference but stay out of param_count.

struct WeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptHeaderError : WeightsError {
  using WeightsError::WeightsError;
};
struct UnknownVersionError : WeightsError {
  using WeightsError::WeightsError;
};
// tensor set or shapes disagree with the canonical layer table
struct SchemaMismatchError : WeightsError {
  using WeightsError::WeightsError;
};
// file ends mid-record
struct CorruptPayloadError : WeightsError {
  using WeightsError::WeightsError;
};

void save_weights(const Network<float>& net, const std::string& path);

// Rebuilds the canonical network (input channel count read from conv-1-1.w)
// and fills every tensor from the file. Throws before returning anything on
// any defect, so a partial network never escapes.
Network<float> load_weights(const std::string& path);

}  // namespace cdnn
