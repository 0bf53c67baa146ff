#pragma once
#include <string>

#include "cdnn/train.hpp"

namespace cdnn {

// Everything a run needs beyond file paths, stored as flat key=value lines
// with # comments. Unknown keys are rejected so typos fail loudly.
struct RunConfig {
  TrainConfig train;
  int64_t image_h = 192;
  int64_t image_w = 256;
  float th_high = 0.8f;
  float th_low = 0.5f;
};

// Throws on an unknown key or an unparsable value, naming both.
void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value);

RunConfig load_config(const std::string& path);

// One key per line with the current value, usable as a template.
std::string config_text(const RunConfig& cfg);

}  // namespace cdnn
