#include "cdnn/network.hpp"

#include <cmath>
#include <string>

#include "cdnn/kernels.hpp"

namespace cdnn {

const std::vector<LayerSpec>& cdnn_layers() {
  static const std::vector<LayerSpec> rows = {
      {"conv-1-1", LayerKind::Conv, 3, 16, true, 0.0},
      {"conv-1-2", LayerKind::Conv, 3, 32, true, 0.0},
      {"pool-1", LayerKind::Pool, 2, 0, false, 0.0},
      {"conv-2-1", LayerKind::Conv, 3, 64, true, 0.0},
      {"conv-2-2", LayerKind::Conv, 3, 64, true, 0.0},
      {"pool-2", LayerKind::Pool, 2, 0, false, 0.0},
      {"conv-3-1", LayerKind::Conv, 3, 128, true, 0.0},
      {"conv-3-2", LayerKind::Conv, 4, 128, true, 0.0},
      {"pool-3", LayerKind::Pool, 2, 0, false, 0.0},
      {"conv-4-1", LayerKind::Conv, 3, 256, true, 0.5},
      {"conv-4-2", LayerKind::Conv, 3, 256, true, 0.0},
      {"pool-4", LayerKind::Pool, 2, 0, false, 0.0},
      {"conv-5", LayerKind::Conv, 3, 512, true, 0.0},
      {"decv-1", LayerKind::Deconv, 3, 256, true, 0.0},
      {"ups-1", LayerKind::Upsample, 2, 0, false, 0.0},
      {"decv-2-1", LayerKind::Deconv, 3, 256, true, 0.0},
      {"decv-2-2", LayerKind::Deconv, 3, 128, true, 0.0},
      {"ups-2", LayerKind::Upsample, 2, 0, false, 0.0},
      {"decv-3-1", LayerKind::Deconv, 4, 128, true, 0.0},
      {"decv-3-2", LayerKind::Deconv, 3, 128, true, 0.0},
      {"ups-3", LayerKind::Upsample, 2, 0, false, 0.0},
      {"decv-4-1", LayerKind::Deconv, 3, 64, true, 0.0},
      {"decv-4-2", LayerKind::Deconv, 3, 32, true, 0.0},
      {"ups-4", LayerKind::Upsample, 2, 0, false, 0.0},
      {"decv-5-1", LayerKind::Deconv, 3, 16, true, 0.5},
      {"output", LayerKind::Output, 3, 1, false, 0.0},
  };
  return rows;
}

namespace {

bool has_params(LayerKind k) {
  return k == LayerKind::Conv || k == LayerKind::Deconv ||
         k == LayerKind::Output;
}

}  // namespace

template <typename T>
int64_t Network<T>::param_count() const {
  int64_t n = 0;
  for (const auto& p : params)
    n += p.w.numel() + p.b.numel() + p.gamma.numel() + p.beta.numel();
  return n;
}

template <typename T>
void Network<T>::for_each_param(
    const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  for (size_t i = 0; i < layers.size(); ++i) {
    if (!has_params(layers[i].kind)) continue;
    const std::string& nm = layers[i].name;
    fn(nm + ".w", params[i].w);
    fn(nm + ".b", params[i].b);
    if (layers[i].has_batchnorm) {
      fn(nm + ".gamma", params[i].gamma);
      fn(nm + ".beta", params[i].beta);
    }
  }
}

template <typename T>
void Network<T>::for_each_param(
    const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  const_cast<Network<T>*>(this)->for_each_param(
      [&fn](const std::string& n, Tensor<T>& t) { fn(n, t); });
}

template <typename T>
Network<T> build_cdnn(int input_channels, Rng& rng) {
  check(input_channels >= 1, "build_cdnn: input_channels must be positive");
  Network<T> net;
  net.input_channels = input_channels;
  net.layers = cdnn_layers();
  net.params.resize(net.layers.size());

  int64_t in_ch = input_channels;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    if (!has_params(spec.kind)) continue;
    LayerParams<T>& p = net.params[i];
    const int64_t out_ch = spec.out_features;
    const int64_t k = spec.filter;

    const Shape4 ws = spec.kind == LayerKind::Deconv
                          ? Shape4{in_ch, out_ch, k, k}
                          : Shape4{out_ch, in_ch, k, k};
    p.w = Tensor<T>(ws);
    const double stddev = std::sqrt(2.0 / double(in_ch * k * k));
    for (auto& v : p.w.data) v = T(rng.normal() * stddev);
    p.b = Tensor<T>({1, out_ch, 1, 1});
    if (spec.has_batchnorm) {
      p.gamma = Tensor<T>({1, out_ch, 1, 1}, T(1));
      p.beta = Tensor<T>({1, out_ch, 1, 1});
      p.run_mean = Tensor<T>({1, out_ch, 1, 1});
      p.run_var = Tensor<T>({1, out_ch, 1, 1}, T(1));
    }
    in_ch = out_ch;
  }
  return net;
}

namespace {

void check_layer_input(const LayerSpec& spec, int64_t expect_c,
                       const Shape4& s) {
  if (has_params(spec.kind)) {
    check(s.c == expect_c,
          spec.name + ": expected " + std::to_string(expect_c) +
              " input channels, got " + std::to_string(s.c));
  } else if (spec.kind == LayerKind::Pool) {
    check(s.h % 2 == 0 && s.w % 2 == 0,
          spec.name + ": spatial extent " + s.str() + " is not even");
  }
}

}  // namespace

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x, FwdMode mode,
                  Rng* rng,
                  std::vector<std::pair<std::string, Shape4>>* trace) {
  check(x.shape.c == net.input_channels,
        "forward: input has " + std::to_string(x.shape.c) +
            " channels, network expects " +
            std::to_string(net.input_channels));
  check(mode == FwdMode::Infer || rng != nullptr,
        "forward: train mode needs an rng for dropout");
  if (trace) trace->clear();

  Tensor<T> h = x;
  int64_t in_ch = net.input_channels;
  std::vector<uint8_t> scratch_mask;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    const LayerParams<T>& p = net.params[i];
    check_layer_input(spec, in_ch, h.shape);

    if (spec.dropout_before > 0 && mode == FwdMode::Train) {
      Tensor<T> d(h.shape);
      kernels::dropout_forward(h, spec.dropout_before, *rng, d, scratch_mask);
      h = std::move(d);
    }

    switch (spec.kind) {
      case LayerKind::Conv:
      case LayerKind::Deconv:
      case LayerKind::Output: {
        Tensor<T> y({h.shape.b, spec.out_features, h.shape.h, h.shape.w});
        if (spec.kind == LayerKind::Deconv)
          kernels::conv2d_adjoint(h, p.w, p.b.ptr(), y);
        else
          kernels::conv2d_forward(h, p.w, p.b.ptr(), y);
        if (spec.has_batchnorm) {
          Tensor<T> z(y.shape);
          if (mode == FwdMode::Train) {
            std::vector<T> m(spec.out_features), v(spec.out_features);
            kernels::channel_moments(y, m.data(), v.data());
            kernels::batchnorm_apply(y, m.data(), v.data(), p.gamma.ptr(),
                                     p.beta.ptr(), T(kBnEps), z);
          } else {
            kernels::batchnorm_apply(y, p.run_mean.ptr(), p.run_var.ptr(),
                                     p.gamma.ptr(), p.beta.ptr(), T(kBnEps),
                                     z);
          }
          y = std::move(z);
        }
        Tensor<T> a(y.shape);
        if (spec.kind == LayerKind::Output)
          kernels::sigmoid_forward(y, a);
        else
          kernels::relu_forward(y, a);
        h = std::move(a);
        in_ch = spec.out_features;
        break;
      }
      case LayerKind::Pool: {
        Tensor<T> y({h.shape.b, h.shape.c, h.shape.h / 2, h.shape.w / 2});
        kernels::maxpool2x2_forward(h, y, scratch_mask);
        h = std::move(y);
        break;
      }
      case LayerKind::Upsample: {
        Tensor<T> y({h.shape.b, h.shape.c, h.shape.h * 2, h.shape.w * 2});
        kernels::upsample2x2_forward(h, y);
        h = std::move(y);
        break;
      }
    }
    if (trace) trace->emplace_back(spec.name, h.shape);
  }
  return h;
}

template <typename T>
TapedNet<T> forward_taped(const Network<T>& net, Tape<T>& tape,
                          typename Tape<T>::Var x, bool use_dropout,
                          Rng* rng) {
  using Var = typename Tape<T>::Var;
  check(tape.val(x).shape.c == net.input_channels,
        "forward_taped: input channel mismatch");
  check(!use_dropout || rng != nullptr, "forward_taped: dropout needs an rng");

  TapedNet<T> out;
  out.batch_mean.resize(net.layers.size());
  out.batch_var.resize(net.layers.size());

  Var h = x;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    const LayerParams<T>& p = net.params[i];

    if (spec.dropout_before > 0 && use_dropout)
      h = tape.dropout(h, spec.dropout_before, *rng);

    switch (spec.kind) {
      case LayerKind::Conv:
      case LayerKind::Deconv:
      case LayerKind::Output: {
        Var w = tape.input(p.w, true);
        Var b = tape.input(p.b, true);
        out.param_vars.push_back(w);
        out.param_vars.push_back(b);
        h = spec.kind == LayerKind::Deconv ? tape.tconv2d(h, w, b)
                                           : tape.conv2d(h, w, b);
        if (spec.has_batchnorm) {
          Var g = tape.input(p.gamma, true);
          Var be = tape.input(p.beta, true);
          out.param_vars.push_back(g);
          out.param_vars.push_back(be);
          h = tape.batchnorm_train(h, g, be, T(kBnEps), &out.batch_mean[i],
                                   &out.batch_var[i]);
        }
        h = spec.kind == LayerKind::Output ? tape.sigmoid(h) : tape.relu(h);
        break;
      }
      case LayerKind::Pool:
        h = tape.maxpool2x2(h);
        break;
      case LayerKind::Upsample:
        h = tape.upsample2x2(h);
        break;
    }
  }
  out.output = h;
  return out;
}

#define CDNN_NET_INSTANTIATE(T)                                              \
  template struct Network<T>;                                                \
  template Network<T> build_cdnn<T>(int, Rng&);                              \
  template Tensor<T> forward<T>(const Network<T>&, const Tensor<T>&,         \
                                FwdMode, Rng*,                               \
                                std::vector<std::pair<std::string, Shape4>>*); \
  template TapedNet<T> forward_taped<T>(const Network<T>&, Tape<T>&,         \
                                        typename Tape<T>::Var, bool, Rng*);

CDNN_NET_INSTANTIATE(float)
CDNN_NET_INSTANTIATE(double)

}  // namespace cdnn
