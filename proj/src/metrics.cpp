#include "cdnn/metrics.hpp"

#include <cstdio>

namespace cdnn {

double jaccard_index(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.shape == b.shape, "jaccard_index: extents differ, " + a.shape.str() +
                                " vs " + b.shape.str());
  int64_t inter = 0, uni = 0;
  for (int64_t k = 0; k < a.numel(); ++k) {
    const bool pa = a.data[k] != 0.0f, pb = b.data[k] != 0.0f;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

double dice_from_jaccard(double j) { return 2.0 * j / (1.0 + j); }

std::string format_report(const std::vector<ReportRow>& rows) {
  check(!rows.empty(), "format_report: no rows");
  std::string out = "name,jaccard,dice\n";
  char line[256];
  double sum = 0.0;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", r.name.c_str(),
                  r.jaccard, dice_from_jaccard(r.jaccard));
    out += line;
    sum += r.jaccard;
  }
  const double mean = sum / double(rows.size());
  std::snprintf(line, sizeof line, "MEAN,%.6f,%.6f\n", mean,
                dice_from_jaccard(mean));
  out += line;
  return out;
}

}  // namespace cdnn
