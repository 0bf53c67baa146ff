#pragma once

#include "cdnn/kernels.hpp"
#include "cdnn/tensor.hpp"

namespace cdnn {

// Jaccard-distance loss, one quotient over every pixel of the batch:
// L = 1 - (sum t*p + s) / (sum t^2 + sum p^2 - sum t*p + s)
// The smoothing term keeps the empty-target/empty-prediction case at 0.
// Accumulation runs in double regardless of T.
template <typename T>
double jaccard_loss(const Tensor<T>& target, const Tensor<T>& pred,
                    double smooth = 1.0);

// dL/dp_k = -[t_k*D - N*(2*p_k - t_k)] / D^2, scaled by `scale`, where
// N and D are the smoothed numerator and denominator above.
template <typename T>
void jaccard_loss_grad(const Tensor<T>& target, const Tensor<T>& pred,
                       double smooth, T scale, Tensor<T>& gpred,
                       kernels::Accum acc = kernels::Accum::Overwrite);

}  // namespace cdnn
