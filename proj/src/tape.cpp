#include "cdnn/tape.hpp"

#include <memory>
#include <utility>

#include "cdnn/kernels.hpp"
#include "cdnn/loss.hpp"

namespace cdnn {

using kernels::Accum;

template <typename T>
typename Tape<T>::Var Tape<T>::push(Tensor<T> v, bool requires_grad) {
  slots_.push_back(Slot{std::move(v), Tensor<T>{}, requires_grad, false});
  return static_cast<Var>(slots_.size() - 1);
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> v, bool requires_grad) {
  return push(std::move(v), requires_grad);
}

template <typename T>
void Tape<T>::record(Var out, std::function<void()> bwd) {
  if (recording_ && slots_[out].requires_grad)
    nodes_.push_back(Node{out, std::move(bwd)});
}

template <typename T>
Tensor<T>& Tape<T>::ensure_grad(Var v) {
  Slot& s = slots_[v];
  if (!s.grad_alloc) {
    s.grad = Tensor<T>(s.val.shape);
    s.grad_alloc = true;
  }
  return s.grad;
}

template <typename T>
void Tape<T>::hash_bytes(const uint8_t* p, size_t n) {
  uint64_t h = kink_hash_;
  for (size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 1099511628211ull;
  }
  kink_hash_ = h;
}

template <typename T>
void Tape<T>::hash_signs(const Tensor<T>& t) {
  uint64_t h = kink_hash_;
  for (int64_t k = 0; k < t.numel(); ++k) {
    h ^= t.data[k] > T(0) ? 1u : 0u;
    h *= 1099511628211ull;
  }
  kink_hash_ = h;
}

template <typename T>
typename Tape<T>::Var Tape<T>::conv2d(Var x, Var w, Var bias) {
  Tensor<T> y;
  kernels::conv2d_forward(val(x), val(w),
                          bias == kNone ? nullptr : val(bias).ptr(), y);
  const bool req = requires_grad(x) || requires_grad(w) ||
                   (bias != kNone && requires_grad(bias));
  const Var out = push(std::move(y), req);
  record(out, [this, x, w, bias, out] {
    const Tensor<T>& gy = grad(out);
    if (requires_grad(x))
      kernels::conv2d_adjoint(gy, val(w), static_cast<const T*>(nullptr),
                              ensure_grad(x), Accum::Add);
    if (requires_grad(w))
      kernels::conv2d_weight_grad(val(x), gy, ensure_grad(w), Accum::Add);
    if (bias != kNone && requires_grad(bias))
      kernels::channel_sum(gy, ensure_grad(bias).ptr(), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::tconv2d(Var x, Var w, Var bias) {
  Tensor<T> y;
  kernels::conv2d_adjoint(val(x), val(w),
                          bias == kNone ? nullptr : val(bias).ptr(), y);
  const bool req = requires_grad(x) || requires_grad(w) ||
                   (bias != kNone && requires_grad(bias));
  const Var out = push(std::move(y), req);
  record(out, [this, x, w, bias, out] {
    const Tensor<T>& gy = grad(out);
    if (requires_grad(x))
      kernels::conv2d_forward(gy, val(w), static_cast<const T*>(nullptr),
                              ensure_grad(x), Accum::Add);
    // d/dw of the adjoint swaps the two activation roles
    if (requires_grad(w))
      kernels::conv2d_weight_grad(gy, val(x), ensure_grad(w), Accum::Add);
    if (bias != kNone && requires_grad(bias))
      kernels::channel_sum(gy, ensure_grad(bias).ptr(), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::relu(Var x) {
  Tensor<T> y;
  kernels::relu_forward(val(x), y);
  if (hashing_) hash_signs(val(x));
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out] {
    kernels::relu_backward(val(x), grad(out), ensure_grad(x), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::sigmoid(Var x) {
  Tensor<T> y;
  kernels::sigmoid_forward(val(x), y);
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out] {
    kernels::sigmoid_backward(val(out), grad(out), ensure_grad(x), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::maxpool2x2(Var x) {
  Tensor<T> y;
  auto argmax = std::make_shared<std::vector<uint8_t>>();
  kernels::maxpool2x2_forward(val(x), y, *argmax);
  if (hashing_) hash_bytes(argmax->data(), argmax->size());
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out, argmax] {
    kernels::maxpool2x2_backward(grad(out), *argmax, ensure_grad(x), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::upsample2x2(Var x) {
  Tensor<T> y;
  kernels::upsample2x2_forward(val(x), y);
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out] {
    kernels::upsample2x2_backward(grad(out), ensure_grad(x), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::dropout(Var x, double p, Rng& rng) {
  Tensor<T> y;
  auto mask = std::make_shared<std::vector<uint8_t>>();
  kernels::dropout_forward(val(x), p, rng, y, *mask);
  if (hashing_) hash_bytes(mask->data(), mask->size());
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out, mask, p] {
    kernels::dropout_backward(grad(out), *mask, p, ensure_grad(x), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::batchnorm_train(Var x, Var gamma, Var beta,
                                               T eps,
                                               std::vector<T>* batch_mean,
                                               std::vector<T>* batch_var) {
  const Tensor<T>& xv = val(x);
  const int64_t C = xv.shape.c;
  check(val(gamma).numel() == C && val(beta).numel() == C,
        "batchnorm: gamma/beta extent does not match channels of " +
            xv.shape.str());
  check(xv.shape.b * xv.shape.h * xv.shape.w > 1,
        "batchnorm: train mode needs more than one value per channel");
  auto mean = std::make_shared<std::vector<T>>(C);
  auto var = std::make_shared<std::vector<T>>(C);
  kernels::channel_moments(xv, mean->data(), var->data());
  if (batch_mean) *batch_mean = *mean;
  if (batch_var) *batch_var = *var;
  Tensor<T> y;
  kernels::batchnorm_apply(xv, mean->data(), var->data(), val(gamma).ptr(),
                           val(beta).ptr(), eps, y);
  const bool req =
      requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  const Var out = push(std::move(y), req);
  record(out, [this, x, gamma, beta, out, mean, var, eps] {
    // the kernel produces all three gradients in one pass
    kernels::batchnorm_backward(val(x), mean->data(), var->data(),
                                val(gamma).ptr(), eps, grad(out),
                                ensure_grad(x), ensure_grad(gamma).ptr(),
                                ensure_grad(beta).ptr(), Accum::Add);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  check(val(a).shape == val(b).shape, "add: shape mismatch " +
                                          val(a).shape.str() + " vs " +
                                          val(b).shape.str());
  Tensor<T> y = val(a);
  for (int64_t k = 0; k < y.numel(); ++k) y.data[k] += val(b).data[k];
  const Var out = push(std::move(y), requires_grad(a) || requires_grad(b));
  record(out, [this, a, b, out] {
    const Tensor<T>& gy = grad(out);
    if (requires_grad(a)) {
      Tensor<T>& ga = ensure_grad(a);
      for (int64_t k = 0; k < gy.numel(); ++k) ga.data[k] += gy.data[k];
    }
    if (requires_grad(b)) {
      Tensor<T>& gb = ensure_grad(b);
      for (int64_t k = 0; k < gy.numel(); ++k) gb.data[k] += gy.data[k];
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::weighted_sum(Var x, Tensor<T> coeff) {
  check(val(x).shape == coeff.shape, "weighted_sum: shape mismatch");
  auto c = std::make_shared<Tensor<T>>(std::move(coeff));
  double s = 0;
  for (int64_t k = 0; k < val(x).numel(); ++k)
    s += double(val(x).data[k]) * double(c->data[k]);
  Tensor<T> y({1, 1, 1, 1});
  y.data[0] = static_cast<T>(s);
  const Var out = push(std::move(y), requires_grad(x));
  record(out, [this, x, out, c] {
    const T g0 = grad(out).data[0];
    Tensor<T>& gx = ensure_grad(x);
    for (int64_t k = 0; k < gx.numel(); ++k) gx.data[k] += g0 * c->data[k];
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::jaccard(Var pred, Tensor<T> target,
                                       double smooth) {
  auto t = std::make_shared<Tensor<T>>(std::move(target));
  Tensor<T> y({1, 1, 1, 1});
  y.data[0] = static_cast<T>(jaccard_loss(*t, val(pred), smooth));
  const Var out = push(std::move(y), requires_grad(pred));
  record(out, [this, pred, out, t, smooth] {
    jaccard_loss_grad(*t, val(pred), smooth, grad(out).data[0],
                      ensure_grad(pred), Accum::Add);
  });
  return out;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  check(slots_[loss].val.numel() == 1, "backward: loss is not a scalar");
  ensure_grad(loss).data[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (slots_[it->out].grad_alloc) it->bwd();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cdnn
