#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cdnn/rng.hpp"
#include "cdnn/tensor.hpp"

namespace cdnn {

// Reverse-mode tape. Each op stores its output tensor and, while recording,
// a backward closure; backward() replays the closures in reverse execution
// order, accumulating additively into operand gradients. Gradients are
// allocated lazily, so branches that never feed the loss cost nothing.
//
// The kink hash fingerprints every discrete forward decision (relu signs,
// maxpool argmax, dropout masks) when enabled; the gradient checker compares
// hashes across perturbed evaluations to detect a crossed non-differentiable
// point.
template <typename T>
class Tape {
 public:
  using Var = int32_t;
  static constexpr Var kNone = -1;

  Var input(Tensor<T> v, bool requires_grad);

  const Tensor<T>& val(Var v) const { return slots_[v].val; }
  const Tensor<T>& grad(Var v) const { return slots_[v].grad; }
  bool requires_grad(Var v) const { return slots_[v].requires_grad; }
  int64_t var_count() const { return static_cast<int64_t>(slots_.size()); }

  Var conv2d(Var x, Var w, Var bias = kNone);
  Var tconv2d(Var x, Var w, Var bias = kNone);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var maxpool2x2(Var x);
  Var upsample2x2(Var x);
  Var dropout(Var x, double p, Rng& rng);
  // Normalizes by the batch moments of x; backward differentiates through
  // them. Reports the moments when pointers are given (running-stat updates).
  Var batchnorm_train(Var x, Var gamma, Var beta, T eps,
                      std::vector<T>* batch_mean = nullptr,
                      std::vector<T>* batch_var = nullptr);
  Var add(Var a, Var b);
  // scalar = sum_k coeff[k] * x[k]; scalarizer for gradient checks
  Var weighted_sum(Var x, Tensor<T> coeff);
  Var jaccard(Var pred, Tensor<T> target, double smooth);

  // Seeds d(loss)=1 and accumulates gradients of everything it depends on.
  void backward(Var loss);

  void set_recording(bool r) { recording_ = r; }
  void set_hashing(bool h) { hashing_ = h; }
  uint64_t kink_hash() const { return kink_hash_; }

 private:
  struct Slot {
    Tensor<T> val;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_alloc = false;
  };
  struct Node {
    Var out;
    std::function<void()> bwd;
  };

  Var push(Tensor<T> v, bool requires_grad);
  void record(Var out, std::function<void()> bwd);
  Tensor<T>& ensure_grad(Var v);
  void hash_bytes(const uint8_t* p, size_t n);
  void hash_signs(const Tensor<T>& t);

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  bool recording_ = true;
  bool hashing_ = false;
  uint64_t kink_hash_ = 1469598103934665603ull;
};

}  // namespace cdnn
