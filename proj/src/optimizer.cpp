#include "onsetsurv/optimizer.hpp"

#include <cmath>

namespace onsetsurv::nn {

void sgd_step(ParamStore& params, double lr, double momentum) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.grad.size(); ++i)
      if (!std::isfinite(e.grad[i]))
        throw NonFiniteGradient("non-finite gradient in '" + e.name + "' at element " + std::to_string(i) + " (" +
                                std::to_string(e.grad[i]) + ")");
  }
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      e.momentum[i] = momentum * e.momentum[i] + e.grad[i];
      e.value[i] -= lr * e.momentum[i];
    }
    e.grad.fill(0.0);
  }
}

double momentum_at_epoch(int epoch) {
  constexpr double start = 0.45, end = 0.9;
  constexpr int ramp_begin = 10, ramp_end = 20;
  if (epoch <= ramp_begin) return start;
  if (epoch >= ramp_end) return end;
  return start + (end - start) * static_cast<double>(epoch - ramp_begin) / (ramp_end - ramp_begin);
}

}  // namespace onsetsurv::nn
