#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "griduq/autodiff.hpp"
#include "griduq/checkpoint.hpp"
#include "griduq/grid.hpp"
#include "griduq/random.hpp"
#include "griduq/tensor.hpp"

namespace griduq {

enum class HeadKind { Gaussian, QuantileTriplet };

const char* head_name(HeadKind h);

/// Floor added to softplus(raw) so the predicted variance never reaches 0.
inline constexpr float kVarianceFloor = 1e-6f;

struct ModelConfig {
  int in_channels = 28;
  int base_width = 32;
  /// Number of pooling stages; inputs are padded to a multiple of 2^depth.
  int depth = 3;
  float dropout_rate = 0.1f;
  HeadKind head = HeadKind::Gaussian;
  /// Target quantile levels of the three heads, used when head is
  /// QuantileTriplet.
  std::array<float, 3> quantiles{0.05f, 0.5f, 0.95f};

  /// Throws ContractError on an invalid configuration.
  void validate() const;
  int head_channels() const { return head == HeadKind::Gaussian ? 2 : 3; }
  int pad_multiple() const { return 1 << depth; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named U-Net weights in a fixed order (encoder levels, bottleneck,
/// decoder levels, head).
class UNetParams {
 public:
  UNetParams() = default;
  UNetParams(ModelConfig config, std::vector<NamedTensor> tensors);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::vector<Tensor*> pointers();
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  ModelConfig config_;
  std::vector<NamedTensor> tensors_;
};

/// He-uniform conv weights, zero biases. Deterministic in (config, seed).
UNetParams build(const ModelConfig& config, std::uint64_t seed);

/// Rebuilds parameters from checkpoint tensors, checking every name and
/// shape against the architecture implied by `config`.
UNetParams params_from_checkpoint(const ModelConfig& config, std::vector<NamedTensor> tensors);

/// Raw network output [N, head_channels, H, W] recorded on `tape`.
/// Parameters enter the tape as trainable leaves.
Var forward(Tape& tape, UNetParams& params, Var x, bool dropout_active, Rng& rng);
/// Same network with frozen parameters.
Var forward(Tape& tape, const UNetParams& params, Var x, bool dropout_active, Rng& rng);
/// Inference convenience: x is [C,H,W] or [N,C,H,W].
Tensor forward(const UNetParams& params, const Tensor& x, bool dropout_active, Rng& rng);

struct GaussianVars {
  Var mu;
  Var sigma2;
};

/// Splits a Gaussian-head output into mean and variance softplus(s) + floor.
GaussianVars gaussian_head(Tape& tape, Var raw);

struct GaussianOutput {
  Grid mu;      // ppb
  Grid sigma2;  // ppb^2
};

GaussianOutput predict_gaussian(const UNetParams& params, const Tensor& x, bool dropout_active, Rng& rng);

struct QuantileOutput {
  Grid lo;
  Grid mid;
  Grid hi;
};

/// The three quantile channels in level order, dropout inactive. No
/// reordering is applied when heads cross.
QuantileOutput predict_quantiles(const UNetParams& params, const Tensor& x);

/// x as a batch of one: [C,H,W] -> [1,C,H,W]; [N,C,H,W] passes through.
Tensor as_batch(const Tensor& x);

}  // namespace griduq
