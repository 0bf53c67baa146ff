#include "cdnn/adam.hpp"

#include <cmath>

namespace cdnn {

template <typename T>
void Adam<T>::step(const std::vector<Tensor<T>*>& params,
                   const std::vector<const Tensor<T>*>& grads) {
  check(params.size() == grads.size(), "adam: params/grads length mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i]->numel()), 0.0);
      v_[i].assign(static_cast<size_t>(params[i]->numel()), 0.0);
    }
  }
  check(m_.size() == params.size(), "adam: parameter list changed length");

  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const int64_t n = p.numel();
    check(int64_t(m_[i].size()) == n, "adam: parameter shape changed");
    const Tensor<T>* g = grads[i];
    const bool zero = g == nullptr || g->numel() == 0;
    if (!zero)
      check(g->shape == p.shape, "adam: gradient shape mismatch");
    double* m = m_[i].data();
    double* v = v_[i].data();
#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < n; ++k) {
      const double gv = zero ? 0.0 : double(g->data[k]);
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gv;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gv * gv;
      const double step =
          cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
      p.data[k] = T(double(p.data[k]) - step);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cdnn
