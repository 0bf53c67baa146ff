#pragma once

#include <cstdint>
#include <vector>

#include "cdnn/rng.hpp"
#include "cdnn/tensor.hpp"

// Layer-primitive kernels. The default namespace holds the production
// (OpenMP-parallel) implementations; kernels::serial holds a naive reference
// used by the tests and the benchmark. Both compute every output element as
// a fixed-order sum, so results do not depend on the thread count.
//
// Convolution convention: cross-correlation (no kernel flip), stride 1,
// "same" spatial padding with pad_before = (k - 1) / 2. For even kernels the
// extra row/column of padding falls at the bottom/right.

namespace cdnn::kernels {

enum class Accum { Overwrite, Add };

// y[b,o,i,j] = bias[o] + sum_{c,u,v} x[b,c,i+u-ph,j+v-pw] * w[o,c,u,v]
// x: (B,Cin,H,W), w: (Cout,Cin,kh,kw), y: (B,Cout,H,W). bias may be null.
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                    Tensor<T>& y, Accum acc = Accum::Overwrite);

// Adjoint of conv2d_forward with respect to its input:
// out[b,c,p,q] = bias[c] + sum_{o,u,v} in[b,o,p-u+ph,q-v+pw] * w[o,c,u,v]
// in: (B,Cout,H,W), w: (Cout,Cin,kh,kw), out: (B,Cin,H,W).
// This is both the conv2d input gradient and the transposed-conv forward map.
template <typename T>
void conv2d_adjoint(const Tensor<T>& in, const Tensor<T>& w, const T* bias,
                    Tensor<T>& out, Accum acc = Accum::Overwrite);

// gw[o,c,u,v] = sum_{b,i,j} x[b,c,i+u-ph,j+v-pw] * gy[b,o,i,j]
template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gw,
                        Accum acc = Accum::Overwrite);

// out[c] = sum_{b,i,j} t[b,c,i,j]   (bias gradients)
template <typename T>
void channel_sum(const Tensor<T>& t, T* out, Accum acc = Accum::Overwrite);

// Disjoint 2x2 windows, extents halved. argmax holds the in-window winner
// (0..3, row-major); ties go to the first position scanned.
template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        std::vector<uint8_t>& argmax);
template <typename T>
void maxpool2x2_backward(const Tensor<T>& gy, const std::vector<uint8_t>& argmax,
                         Tensor<T>& gx, Accum acc = Accum::Overwrite);

// Nearest-neighbour: every input pixel becomes a 2x2 block.
template <typename T>
void upsample2x2_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void upsample2x2_backward(const Tensor<T>& gy, Tensor<T>& gx,
                          Accum acc = Accum::Overwrite);

// Per-channel mean and biased variance over (batch, height, width).
template <typename T>
void channel_moments(const Tensor<T>& x, T* mean, T* var);

// y = gamma * (x - mean) / sqrt(var + eps) + beta, per channel.
template <typename T>
void batchnorm_apply(const Tensor<T>& x, const T* mean, const T* var,
                     const T* gamma, const T* beta, T eps, Tensor<T>& y);

// Gradient of batchnorm_apply when mean/var are the batch statistics of x.
template <typename T>
void batchnorm_backward(const Tensor<T>& x, const T* mean, const T* var,
                        const T* gamma, T eps, const Tensor<T>& gy,
                        Tensor<T>& gx, T* ggamma, T* gbeta,
                        Accum acc = Accum::Overwrite);

// Gradient of batchnorm_apply when mean/var are constants (inference stats).
template <typename T>
void batchnorm_backward_frozen(const Tensor<T>& x, const T* mean, const T* var,
                               const T* gamma, T eps, const Tensor<T>& gy,
                               Tensor<T>& gx, T* ggamma, T* gbeta,
                               Accum acc = Accum::Overwrite);

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx,
                   Accum acc = Accum::Overwrite);

template <typename T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y);
// Takes the forward *output* y; d/dx sigmoid = y * (1 - y).
template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx,
                      Accum acc = Accum::Overwrite);

// Inverted dropout: each element is zeroed with probability p, survivors are
// scaled by 1/(1-p). mask records survivors (1 byte per element).
template <typename T>
void dropout_forward(const Tensor<T>& x, double p, Rng& rng, Tensor<T>& y,
                     std::vector<uint8_t>& mask);
template <typename T>
void dropout_backward(const Tensor<T>& gy, const std::vector<uint8_t>& mask,
                      double p, Tensor<T>& gx, Accum acc = Accum::Overwrite);

namespace serial {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                    Tensor<T>& y, Accum acc = Accum::Overwrite);
template <typename T>
void conv2d_adjoint(const Tensor<T>& in, const Tensor<T>& w, const T* bias,
                    Tensor<T>& out, Accum acc = Accum::Overwrite);
template <typename T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gw,
                        Accum acc = Accum::Overwrite);
template <typename T>
void channel_sum(const Tensor<T>& t, T* out, Accum acc = Accum::Overwrite);
template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        std::vector<uint8_t>& argmax);
template <typename T>
void maxpool2x2_backward(const Tensor<T>& gy, const std::vector<uint8_t>& argmax,
                         Tensor<T>& gx, Accum acc = Accum::Overwrite);
template <typename T>
void upsample2x2_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void upsample2x2_backward(const Tensor<T>& gy, Tensor<T>& gx,
                          Accum acc = Accum::Overwrite);
template <typename T>
void channel_moments(const Tensor<T>& x, T* mean, T* var);
template <typename T>
void batchnorm_apply(const Tensor<T>& x, const T* mean, const T* var,
                     const T* gamma, const T* beta, T eps, Tensor<T>& y);
template <typename T>
void batchnorm_backward(const Tensor<T>& x, const T* mean, const T* var,
                        const T* gamma, T eps, const Tensor<T>& gy,
                        Tensor<T>& gx, T* ggamma, T* gbeta,
                        Accum acc = Accum::Overwrite);

}  // namespace serial

// Shared shape validation, throws ShapeError with a diagnostic.
void check_conv_shapes(const Shape4& x, const Shape4& w, const char* who);

}  // namespace cdnn::kernels
