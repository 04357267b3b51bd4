#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "griduq/tensor.hpp"

namespace griduq {

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First/second moment buffers, one per parameter tensor, plus the step
/// counter used for bias correction.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step = 0;
};

/// One Adam update with bias correction and a constant learning rate.
/// Parameters without a gradient buffer are treated as having zero gradient.
void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamOptions& opts = {});

/// L2 norm over all gradient buffers, accumulated in double.
double global_grad_norm(std::span<Tensor* const> params);

/// Rescales all gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

}  // namespace griduq
