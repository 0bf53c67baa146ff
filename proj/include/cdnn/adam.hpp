#pragma once

#include <vector>

#include "cdnn/tensor.hpp"

namespace cdnn {

struct AdamConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Moment buffers are kept in double and
// sized on the first step; the parameter list must keep its shape from then
// on. A null or empty gradient tensor counts as zero gradient.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Tensor<T>*>& params,
            const std::vector<const Tensor<T>*>& grads);

  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace cdnn
