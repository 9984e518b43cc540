#pragma once

#include <cstdint>
#include <vector>

#include "choplab/tensor.hpp"

namespace choplab {

// Adam optimizer state for a fixed, ordered list of parameter tensors.
// Moment tensors match the parameter shapes exactly.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const std::vector<Tensor*>& params, double lr);
};

// One bias-corrected Adam update, in place. `lr_scale` multiplies the
// base learning rate (used for warmup schedules).
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               double lr_scale = 1.0);

}  // namespace choplab
