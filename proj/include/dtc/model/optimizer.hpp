#pragma once

#include "dtc/model/tensors.hpp"

namespace dtc::model {

struct AdamWHyper {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for the tensors of one TensorList.
template <typename T>
struct AdamWState {
  long step = 0;
  TensorList<T> m, v;
};

/// Adam with decoupled weight decay. Only tensors that have an entry in
/// `grads` are updated; decay is skipped for tensors flagged decay = false.
/// The state is created lazily on the first call.
template <typename T>
void adamw_step(TensorList<T>& params, const TensorList<T>& grads, AdamWState<T>& state, const AdamWHyper& h);

}  // namespace dtc::model
