#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdnn/rng.hpp"
#include "cdnn/tape.hpp"
#include "cdnn/tensor.hpp"

namespace cdnn {

enum class LayerKind { Conv, Pool, Deconv, Upsample, Output };

struct LayerSpec {
  std::string name;
  LayerKind kind;
  int filter;         // square tap count; pools and upsamples use 2x2 windows
  int out_features;   // 0 on rows without parameters
  bool has_batchnorm;
  double dropout_before;  // 0 where absent
};

// the canonical 26-row conv-deconv table
const std::vector<LayerSpec>& cdnn_layers();

template <typename T>
struct LayerParams {
  // w is (out,in,k,k) on conv rows and (in,out,k,k) on deconv rows
  Tensor<T> w, b;
  Tensor<T> gamma, beta;        // (1,c,1,1)
  Tensor<T> run_mean, run_var;  // inference statistics, not trained
};

enum class FwdMode { Train, Infer };

constexpr double kBnEps = 1e-5;

template <typename T>
struct Network {
  int input_channels = 0;
  std::vector<LayerSpec> layers;
  std::vector<LayerParams<T>> params;  // parallel to layers

  // trainable scalars only; running stats excluded
  int64_t param_count() const;

  // visits trainable tensors in serialization order ("<layer>.w", ".b",
  // ".gamma", ".beta"); the order is the contract for optimizer state and
  // the weight file
  void for_each_param(
      const std::function<void(const std::string&, Tensor<T>&)>& fn);
  void for_each_param(
      const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;
};

// He fan-in initialization for weights, zero biases, gamma 1, beta 0,
// running stats at the identity (mean 0, var 1)
template <typename T>
Network<T> build_cdnn(int input_channels, Rng& rng);

// Plain forward pass. Train mode normalizes with batch statistics and applies
// dropout (rng required); infer mode uses running statistics with identity
// dropout and never mutates anything. trace, when given, records the
// activation shape after every row.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x, FwdMode mode,
                  Rng* rng = nullptr,
                  std::vector<std::pair<std::string, Shape4>>* trace = nullptr);

// One taped forward for training or gradient checking. Parameters enter the
// tape as inputs; param_vars lists them in for_each_param order. Batch
// moments of every batchnorm row come back keyed by layer index so the
// caller can fold them into the running statistics.
template <typename T>
struct TapedNet {
  typename Tape<T>::Var output = Tape<T>::kNone;
  std::vector<typename Tape<T>::Var> param_vars;
  std::vector<std::vector<T>> batch_mean, batch_var;  // parallel to layers
};

template <typename T>
TapedNet<T> forward_taped(const Network<T>& net, Tape<T>& tape,
                          typename Tape<T>::Var x, bool use_dropout, Rng* rng);

}  // namespace cdnn
