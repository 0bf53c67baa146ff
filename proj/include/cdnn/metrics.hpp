#pragma once
#include <string>
#include <vector>

#include "cdnn/tensor.hpp"

namespace cdnn {

// |a ∩ b| / |a ∪ b| over binary masks of equal extents; 1.0 when both are
// empty (both raters agree there is nothing to find).
double jaccard_index(const Tensor<float>& a, const Tensor<float>& b);

double dice_from_jaccard(double j);

struct ReportRow {
  std::string name;
  double jaccard = 0.0;
};

// "name,jaccard,dice" per row plus a final "MEAN,<j>,<d>" line. Dice is
// derived as 2J/(1+J) on every row, the mean line included, so the relation
// holds exactly throughout the report.
std::string format_report(const std::vector<ReportRow>& rows);

}  // namespace cdnn
