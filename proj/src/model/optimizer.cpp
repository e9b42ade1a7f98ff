#include "dtc/model/optimizer.hpp"

#include <cmath>

namespace dtc::model {

template <typename T>
void adamw_step(TensorList<T>& params, const TensorList<T>& grads, AdamWState<T>& state, const AdamWHyper& h) {
  if (state.m.empty() && state.v.empty()) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  require(state.m.size() == params.size(), "adamw_step: optimizer state does not match the parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.item(i);
    const Tensor<T>* g = grads.find(p.name);
    if (!g) continue;
    require(g->value.rows() == p.value.rows() && g->value.cols() == p.value.cols(),
            "adamw_step: gradient shape mismatch for '" + p.name + "'");
    auto& m = state.m.item(i).value;
    auto& v = state.v.item(i).value;
    T* w = p.value.data();
    const T* gd = g->value.data();
    T* md = m.data();
    T* vd = v.data();
    const double decay = p.decay ? h.lr * h.weight_decay : 0.0;
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double gk = gd[k];
      const double mk = h.beta1 * md[k] + (1.0 - h.beta1) * gk;
      const double vk = h.beta2 * vd[k] + (1.0 - h.beta2) * gk * gk;
      md[k] = static_cast<T>(mk);
      vd[k] = static_cast<T>(vk);
      const double mhat = mk / bc1, vhat = vk / bc2;
      double wk = w[k];
      wk -= decay * wk;
      wk -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
      w[k] = static_cast<T>(wk);
    }
  }
}

template void adamw_step<float>(TensorList<float>&, const TensorList<float>&, AdamWState<float>&, const AdamWHyper&);
template void adamw_step<double>(TensorList<double>&, const TensorList<double>&, AdamWState<double>&,
                                 const AdamWHyper&);

}  // namespace dtc::model
