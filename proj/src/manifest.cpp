#include "cdnn/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cdnn/netpbm.hpp"
#include "cdnn/preprocess.hpp"

namespace fs = std::filesystem;

namespace cdnn {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q.string() : (base / q).string();
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected image.ppm,mask.pgm");
    ManifestEntry e;
    e.image = resolve(base, trim(t.substr(0, comma)));
    e.mask = resolve(base, trim(t.substr(comma + 1)));
    if (e.image.empty() || e.mask.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty path");
    e.name = fs::path(e.image).stem().string();
    if (!seen.insert(e.name).second)
      throw std::runtime_error(path + ": duplicate image name " + e.name);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw std::runtime_error(path + ": manifest is empty");
  return out;
}

Dataset load_dataset(const std::vector<ManifestEntry>& entries, int64_t h,
                     int64_t w) {
  Dataset data;
  data.reserve(entries.size());
  for (const auto& e : entries) {
    TrainItem item;
    item.image = preprocess(read_ppm(e.image), h, w);
    item.mask = preprocess_mask(read_pgm(e.mask), h, w);
    item.name = e.name;
    data.push_back(std::move(item));
  }
  return data;
}

}  // namespace cdnn
