#pragma once

#include <stdexcept>
#include <string>

#include "onsetsurv/graph.hpp"

namespace onsetsurv::nn {

struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// v <- momentum * v + grad; param <- param - lr * v; gradients are cleared afterwards.
/// Non-trainable entries are skipped. Throws NonFiniteGradient before touching any
/// parameter if a gradient holds NaN or Inf.
void sgd_step(ParamStore& params, double lr, double momentum);

/// Momentum schedule used for training: 0.45 through epoch 10, a linear ramp to 0.9
/// at epoch 20, then flat. Epochs are 1-based.
double momentum_at_epoch(int epoch);

}  // namespace onsetsurv::nn
