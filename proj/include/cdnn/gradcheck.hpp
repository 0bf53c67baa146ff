#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cdnn/tape.hpp"

namespace cdnn {

struct GradCheckOptions {
  double h = 1e-5;
  int max_retries = 5;
};

struct GradCheckResult {
  double max_err = 0;
  int resamples = 0;  // inputs regenerated after a kink-hash mismatch
  bool ok = false;    // false only if every attempt crossed a kink
};

using GradCheckGen = std::function<std::vector<Tensor<double>>(Rng&)>;
using GradCheckBuild = std::function<Tape<double>::Var(
    Tape<double>&, const std::vector<Tape<double>::Var>&)>;

// Central-difference check of a taped scalar function against its recorded
// gradients: max over checked elements of
// |analytic - numeric| / max(1, |analytic|).
// gen draws fresh inputs, build assembles the scalar; coords lists
// (input index, flat element index) pairs to probe, empty meaning all.
// If a perturbed evaluation lands on a different side of a relu/maxpool/
// dropout decision (kink hash changes), the inputs are resampled.
GradCheckResult grad_check(const GradCheckGen& gen, const GradCheckBuild& build,
                           std::vector<std::pair<int, int64_t>> coords,
                           Rng& rng, const GradCheckOptions& opt = {});

}  // namespace cdnn
