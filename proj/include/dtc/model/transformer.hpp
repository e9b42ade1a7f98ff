#pragma once

#include <cstdint>

#include "dtc/model/batch.hpp"
#include "dtc/model/config.hpp"
#include "dtc/model/tensors.hpp"

namespace dtc::model {

/// A computed quantity left the finite range (names the offending tensor).
class NumericalFault : public Error {
 public:
  using Error::Error;
};

/// Base weights ~ N(0, 0.02^2), biases 0, normalization scales 1 and offsets 0.
template <typename T>
TensorList<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// LoRA factors for W_q and W_v of every layer: A ~ N(0, 1/d_model), B = 0.
/// Empty when cfg.lora_rank == 0.
template <typename T>
TensorList<T> init_adapters(const ModelConfig& cfg, std::uint64_t seed);

/// Predicted actions, (B*K) x n_a, row b*K + k for sample b, slot k. The
/// prediction at slot k reads the hidden state of that slot's observation
/// token, so it depends only on returns/observations up to k and actions before k.
/// Dropout is active only when `train_mode` is set.
template <typename T>
MatR<T> forward(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters,
                const Batch& batch, bool train_mode = false, std::uint64_t dropout_seed = 0);

/// Mean squared action error over real slots (divides by real slots x n_a).
template <typename T>
double action_loss(const MatR<T>& pred, const Batch& batch);

enum class Trainable { kAll, kAdaptersOnly };

template <typename T>
struct LossGrad {
  double loss = 0.0;
  /// Only the trainable tensors appear. kAll covers the base tensors and, when
  /// present, the adapters.
  TensorList<T> grads;
};

/// Loss and exact reverse-mode gradients. The batch is processed in fixed
/// chunks of `chunk` samples whose gradients are summed in chunk order, so the
/// result does not depend on `jobs`. Throws NumericalFault on a non-finite gradient.
template <typename T>
LossGrad<T> loss_and_grad(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters,
                          const Batch& batch, Trainable trainable, bool train_mode = false,
                          std::uint64_t dropout_seed = 0, int jobs = 1, int chunk = 16);

/// W <- W + (alpha / r) B A for every adapted projection.
template <typename T>
TensorList<T> lora_merge(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>& adapters);

/// Throws ValidationError naming the first tensor whose shape disagrees with `cfg`.
template <typename T>
void check_shapes(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters);

}  // namespace dtc::model
