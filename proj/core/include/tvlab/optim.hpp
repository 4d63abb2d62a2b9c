#pragma once

#include <cstdint>
#include <vector>

#include "tvlab/tensor.hpp"

namespace tvlab {

/// Adam first/second-moment buffers, one pair per parameter, plus the shared
/// step counter.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t step = 0;
};

/// One bias-corrected Adam update. grads[i] may be null (parameter
/// unreachable from the loss this step): its moments still decay.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<float>*>& grads, AdamState& state, float lr,
               float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

}  // namespace tvlab
