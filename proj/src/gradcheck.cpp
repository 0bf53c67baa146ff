#include "cdnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cdnn {

namespace {

using Var = Tape<double>::Var;

double eval_once(const GradCheckBuild& build,
                 const std::vector<Tensor<double>>& inputs, uint64_t* hash) {
  Tape<double> tape;
  tape.set_recording(false);
  tape.set_hashing(true);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.input(t, false));
  const Var loss = build(tape, vars);
  *hash = tape.kink_hash();
  return tape.val(loss).data[0];
}

}  // namespace

GradCheckResult grad_check(const GradCheckGen& gen, const GradCheckBuild& build,
                           std::vector<std::pair<int, int64_t>> coords,
                           Rng& rng, const GradCheckOptions& opt) {
  GradCheckResult res;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    std::vector<Tensor<double>> inputs = gen(rng);

    Tape<double> tape;
    tape.set_hashing(true);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.input(t, true));
    const Var loss = build(tape, vars);
    const uint64_t base_hash = tape.kink_hash();
    tape.backward(loss);

    std::vector<Tensor<double>> analytic;
    analytic.reserve(vars.size());
    for (Var v : vars) analytic.push_back(tape.grad(v));  // empty if unused

    std::vector<std::pair<int, int64_t>> probe = coords;
    if (probe.empty())
      for (size_t i = 0; i < inputs.size(); ++i)
        for (int64_t k = 0; k < inputs[i].numel(); ++k)
          probe.emplace_back(static_cast<int>(i), k);

    bool hazard = false;
    double worst = 0;
    for (const auto& [i, k] : probe) {
      const double saved = inputs[i].data[k];
      double fp = 0, fm = 0;
      uint64_t hp = 0, hm = 0;
      inputs[i].data[k] = saved + opt.h;
      fp = eval_once(build, inputs, &hp);
      inputs[i].data[k] = saved - opt.h;
      fm = eval_once(build, inputs, &hm);
      inputs[i].data[k] = saved;
      if (hp != base_hash || hm != base_hash) {
        hazard = true;
        break;
      }
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double a =
          analytic[i].numel() > k ? analytic[i].data[k] : 0.0;
      worst = std::max(worst,
                       std::abs(numeric - a) / std::max(1.0, std::abs(a)));
    }
    if (!hazard) {
      res.max_err = worst;
      res.ok = true;
      return res;
    }
    ++res.resamples;
  }
  return res;  // ok == false: persistent kink crossings
}

}  // namespace cdnn
