#include "cdnn/loss.hpp"

namespace cdnn {

namespace {

template <typename T>
void jaccard_sums(const Tensor<T>& t, const Tensor<T>& p, double& tp,
                  double& tt, double& pp) {
  tp = tt = pp = 0;
  for (int64_t k = 0; k < t.numel(); ++k) {
    const double tv = t.data[k], pv = p.data[k];
    tp += tv * pv;
    tt += tv * tv;
    pp += pv * pv;
  }
}

}  // namespace

template <typename T>
double jaccard_loss(const Tensor<T>& target, const Tensor<T>& pred,
                    double smooth) {
  check(target.shape == pred.shape, "jaccard_loss: target " +
                                        target.shape.str() + " vs prediction " +
                                        pred.shape.str());
  double tp, tt, pp;
  jaccard_sums(target, pred, tp, tt, pp);
  return 1.0 - (tp + smooth) / (tt + pp - tp + smooth);
}

template <typename T>
void jaccard_loss_grad(const Tensor<T>& target, const Tensor<T>& pred,
                       double smooth, T scale, Tensor<T>& gpred,
                       kernels::Accum acc) {
  check(target.shape == pred.shape, "jaccard_loss_grad: target " +
                                        target.shape.str() + " vs prediction " +
                                        pred.shape.str());
  if (acc == kernels::Accum::Overwrite) gpred = Tensor<T>(pred.shape);
  check(gpred.shape == pred.shape, "jaccard_loss_grad: bad gradient shape");
  double tp, tt, pp;
  jaccard_sums(target, pred, tp, tt, pp);
  const double n = tp + smooth, d = tt + pp - tp + smooth;
  const double dd = d * d;
  for (int64_t k = 0; k < pred.numel(); ++k) {
    const double tv = target.data[k], pv = pred.data[k];
    const double g = -(tv * d - n * (2.0 * pv - tv)) / dd;
    gpred.data[k] += static_cast<T>(scale * g);
  }
}

template double jaccard_loss(const Tensor<float>&, const Tensor<float>&, double);
template double jaccard_loss(const Tensor<double>&, const Tensor<double>&, double);
template void jaccard_loss_grad(const Tensor<float>&, const Tensor<float>&,
                                double, float, Tensor<float>&, kernels::Accum);
template void jaccard_loss_grad(const Tensor<double>&, const Tensor<double>&,
                                double, double, Tensor<double>&, kernels::Accum);

}  // namespace cdnn
