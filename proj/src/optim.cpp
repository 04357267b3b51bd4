#include "griduq/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamOptions& opts) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->numel(), 0.0f);
      state.v[i].assign(params[i]->numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError(fmt::format("adam_step: state tracks {} tensors, got {}", state.m.size(), params.size()));
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opts.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opts.beta2), static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) {
      throw ContractError(fmt::format("adam_step: tensor {} has {} elements, moments have {}", i, p.numel(),
                                      m.size()));
    }
    if (p.has_grad() && p.grad().size() != p.numel()) {
      throw ContractError(fmt::format("adam_step: gradient of tensor {} has wrong size", i));
    }
    auto data = p.data();
    auto grad = p.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const float g = p.has_grad() ? grad[j] : 0.0f;
      m[j] = opts.beta1 * m[j] + (1.0f - opts.beta1) * g;
      v[j] = opts.beta2 * v[j] + (1.0f - opts.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= static_cast<float>(opts.lr * mhat / (std::sqrt(vhat) + opts.eps));
    }
  }
}

double global_grad_norm(std::span<Tensor* const> params) {
  double sq = 0.0;
  for (const Tensor* p : params)
    for (float g : p->grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (Tensor* p : params)
      for (float& g : p->grad()) g *= scale;
  }
  return norm;
}

}  // namespace griduq
