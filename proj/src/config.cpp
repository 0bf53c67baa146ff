#include "cdnn/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cdnn {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::runtime_error("config: bad value for " + key + ": " + value);
}

double to_double(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

int64_t to_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  int64_t v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  TrainConfig& t = cfg.train;
  AugmentConfig& a = t.augment;
  if (key == "seed")
    t.seed = uint64_t(to_int(key, value));
  else if (key == "epochs")
    t.epochs = int(to_int(key, value));
  else if (key == "batch_size")
    t.batch_size = int(to_int(key, value));
  else if (key == "ensemble_size")
    t.ensemble_size = int(to_int(key, value));
  else if (key == "learning_rate")
    t.learning_rate = to_double(key, value);
  else if (key == "bn_momentum")
    t.bn_momentum = to_double(key, value);
  else if (key == "loss_smooth")
    t.loss_smooth = to_double(key, value);
  else if (key == "input_channels")
    t.input_channels = int(to_int(key, value));
  else if (key == "augment")
    t.augment_enabled = to_int(key, value) != 0;
  else if (key == "flip_prob")
    a.flip_prob = to_double(key, value);
  else if (key == "shift_frac")
    a.max_shift_frac = to_double(key, value);
  else if (key == "rotate_deg")
    a.max_rotate_deg = to_double(key, value);
  else if (key == "scale_lo")
    a.scale_lo = to_double(key, value);
  else if (key == "scale_hi")
    a.scale_hi = to_double(key, value);
  else if (key == "contrast_lo")
    a.contrast_lo = to_double(key, value);
  else if (key == "contrast_hi")
    a.contrast_hi = to_double(key, value);
  else if (key == "image_h")
    cfg.image_h = to_int(key, value);
  else if (key == "image_w")
    cfg.image_w = to_int(key, value);
  else if (key == "th_high")
    cfg.th_high = float(to_double(key, value));
  else if (key == "th_low")
    cfg.th_low = float(to_double(key, value));
  else
    throw std::runtime_error("config: unknown key " + key);
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    set_config_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

std::string config_text(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const AugmentConfig& a = t.augment;
  char buf[2048];
  std::snprintf(buf, sizeof buf,
                "seed=%llu\n"
                "epochs=%d\n"
                "batch_size=%d\n"
                "ensemble_size=%d\n"
                "learning_rate=%g\n"
                "bn_momentum=%g\n"
                "loss_smooth=%g\n"
                "input_channels=%d\n"
                "augment=%d\n"
                "flip_prob=%g\n"
                "shift_frac=%g\n"
                "rotate_deg=%g\n"
                "scale_lo=%g\n"
                "scale_hi=%g\n"
                "contrast_lo=%g\n"
                "contrast_hi=%g\n"
                "image_h=%lld\n"
                "image_w=%lld\n"
                "th_high=%g\n"
                "th_low=%g\n",
                (unsigned long long)t.seed, t.epochs, t.batch_size,
                t.ensemble_size, t.learning_rate, t.bn_momentum, t.loss_smooth,
                t.input_channels, t.augment_enabled ? 1 : 0, a.flip_prob,
                a.max_shift_frac, a.max_rotate_deg, a.scale_lo, a.scale_hi,
                a.contrast_lo, a.contrast_hi, (long long)cfg.image_h,
                (long long)cfg.image_w, double(cfg.th_high),
                double(cfg.th_low));
  return buf;
}

}  // namespace cdnn
