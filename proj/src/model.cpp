#include "griduq/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

const char* head_name(HeadKind h) { return h == HeadKind::Gaussian ? "gaussian" : "quantile"; }

void ModelConfig::validate() const {
  if (in_channels < 1) throw ContractError(fmt::format("model: in_channels must be >= 1, got {}", in_channels));
  if (base_width < 1) throw ContractError(fmt::format("model: base_width must be >= 1, got {}", base_width));
  if (depth < 1) throw ContractError(fmt::format("model: depth must be >= 1, got {}", depth));
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw ContractError(fmt::format("model: dropout_rate {} outside [0,1)", dropout_rate));
  }
  if (head == HeadKind::QuantileTriplet) {
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
      if (!(quantiles[i] > 0.0f && quantiles[i] < 1.0f)) {
        throw ContractError(fmt::format("model: quantile level {} outside (0,1)", quantiles[i]));
      }
      if (i > 0 && !(quantiles[i] > quantiles[i - 1])) {
        throw ContractError("model: quantile levels must be strictly increasing");
      }
    }
  }
}

namespace {

struct Layout {
  std::string name;
  Shape shape;
  int fan_in;  // 0 for biases
};

void conv_entry(std::vector<Layout>& out, const std::string& prefix, int cin, int cout, int k) {
  out.push_back({prefix + ".weight", {cout, cin, k, k}, cin * k * k});
  out.push_back({prefix + ".bias", {cout}, 0});
}

std::vector<Layout> layout(const ModelConfig& c) {
  std::vector<Layout> out;
  int cin = c.in_channels;
  for (int l = 0; l < c.depth; ++l) {
    const int w = c.base_width << l;
    conv_entry(out, fmt::format("enc{}.conv1", l), cin, w, 3);
    conv_entry(out, fmt::format("enc{}.conv2", l), w, w, 3);
    cin = w;
  }
  const int mid = c.base_width << c.depth;
  conv_entry(out, "mid.conv1", cin, mid, 3);
  conv_entry(out, "mid.conv2", mid, mid, 3);
  cin = mid;
  for (int l = c.depth - 1; l >= 0; --l) {
    const int w = c.base_width << l;
    // 2x2 stride-2 transposed conv: each output pixel sees cin taps.
    out.push_back({fmt::format("dec{}.up.weight", l), {cin, w, 2, 2}, cin});
    out.push_back({fmt::format("dec{}.up.bias", l), {w}, 0});
    conv_entry(out, fmt::format("dec{}.conv1", l), 2 * w, w, 3);
    conv_entry(out, fmt::format("dec{}.conv2", l), w, w, 3);
    cin = w;
  }
  conv_entry(out, "head", cin, c.head_channels(), 1);
  return out;
}

template <typename P>
Var leaf(Tape& tape, P& params, std::string_view name) {
  if constexpr (std::is_const_v<P>) {
    return tape.constant_ref(params.at(name));
  } else {
    return tape.parameter(params.at(name));
  }
}

template <typename P>
Var conv(Tape& tape, P& params, const std::string& prefix, Var x, int padding) {
  return tape.conv2d(x, leaf(tape, params, prefix + ".weight"), leaf(tape, params, prefix + ".bias"), 1, padding);
}

template <typename P>
Var block(Tape& tape, P& params, const std::string& prefix, Var x, bool active, Rng& rng) {
  Var h = tape.relu(conv(tape, params, prefix + ".conv1", x, 1));
  h = tape.relu(conv(tape, params, prefix + ".conv2", h, 1));
  return tape.dropout(h, params.config().dropout_rate, active, rng);
}

template <typename P>
Var forward_impl(Tape& tape, P& params, Var x, bool active, Rng& rng) {
  const ModelConfig& c = params.config();
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 4) throw DimensionError("forward: expected input [N,C,H,W], got " + shape_str(xv.shape()));
  if (xv.dim(1) != c.in_channels) {
    throw DimensionError(fmt::format("forward: input channel axis is {}, model expects {}", xv.dim(1), c.in_channels));
  }
  const int h = xv.dim(2), w = xv.dim(3);
  const int m = c.pad_multiple();
  const int hp = (h + m - 1) / m * m;
  const int wp = (w + m - 1) / m * m;
  Var cur = (hp != h || wp != w) ? tape.pad_to(x, hp, wp) : x;
  std::vector<Var> skips;
  for (int l = 0; l < c.depth; ++l) {
    cur = block(tape, params, fmt::format("enc{}", l), cur, active, rng);
    skips.push_back(cur);
    cur = tape.maxpool2d(cur, 2);
  }
  cur = block(tape, params, "mid", cur, active, rng);
  for (int l = c.depth - 1; l >= 0; --l) {
    const std::string p = fmt::format("dec{}", l);
    cur = tape.conv_transpose2d(cur, leaf(tape, params, p + ".up.weight"), leaf(tape, params, p + ".up.bias"), 2);
    cur = tape.concat_channels(skips[static_cast<std::size_t>(l)], cur);
    cur = block(tape, params, p, cur, active, rng);
  }
  cur = conv(tape, params, "head", cur, 0);
  return (hp != h || wp != w) ? tape.crop_to(cur, h, w) : cur;
}

}  // namespace

UNetParams::UNetParams(ModelConfig config, std::vector<NamedTensor> tensors)
    : config_(config), tensors_(std::move(tensors)) {}

Tensor& UNetParams::at(std::string_view name) {
  for (auto& nt : tensors_)
    if (nt.name == name) return nt.tensor;
  throw ContractError(fmt::format("no parameter named '{}'", name));
}

const Tensor& UNetParams::at(std::string_view name) const {
  for (const auto& nt : tensors_)
    if (nt.name == name) return nt.tensor;
  throw ContractError(fmt::format("no parameter named '{}'", name));
}

std::vector<Tensor*> UNetParams::pointers() {
  std::vector<Tensor*> out;
  out.reserve(tensors_.size());
  for (auto& nt : tensors_) out.push_back(&nt.tensor);
  return out;
}

std::size_t UNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : tensors_) n += nt.tensor.numel();
  return n;
}

void UNetParams::zero_grad() {
  for (auto& nt : tensors_) nt.tensor.zero_grad();
}

UNetParams build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::vector<NamedTensor> tensors;
  for (const auto& entry : layout(config)) {
    Tensor t(entry.shape);
    if (entry.fan_in > 0) {
      const float bound = std::sqrt(6.0f / static_cast<float>(entry.fan_in));
      std::uniform_real_distribution<float> dist(-bound, bound);
      for (float& v : t.data()) v = dist(rng);
    }
    t.set_requires_grad(true);
    tensors.push_back({entry.name, std::move(t)});
  }
  return UNetParams(config, std::move(tensors));
}

UNetParams params_from_checkpoint(const ModelConfig& config, std::vector<NamedTensor> tensors) {
  config.validate();
  const auto expected = layout(config);
  std::vector<NamedTensor> ordered;
  for (const auto& entry : expected) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& nt) { return nt.name == entry.name; });
    if (it == tensors.end()) throw FormatError("checkpoint is missing parameter '" + entry.name + "'");
    if (it->tensor.shape() != entry.shape) {
      throw FormatError(fmt::format("checkpoint parameter '{}' has shape {}, model expects {}", entry.name,
                                    shape_str(it->tensor.shape()), shape_str(entry.shape)));
    }
    Tensor t = std::move(it->tensor);
    t.set_requires_grad(true);
    ordered.push_back({entry.name, std::move(t)});
  }
  return UNetParams(config, std::move(ordered));
}

Var forward(Tape& tape, UNetParams& params, Var x, bool dropout_active, Rng& rng) {
  return forward_impl(tape, params, x, dropout_active, rng);
}

Var forward(Tape& tape, const UNetParams& params, Var x, bool dropout_active, Rng& rng) {
  return forward_impl(tape, params, x, dropout_active, rng);
}

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  throw DimensionError("expected input [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
}

Tensor forward(const UNetParams& params, const Tensor& x, bool dropout_active, Rng& rng) {
  Tape tape(false);
  Var in = tape.constant(as_batch(x));
  return tape.value(forward(tape, params, in, dropout_active, rng));
}

GaussianVars gaussian_head(Tape& tape, Var raw) {
  GaussianVars out;
  out.mu = tape.slice_channels(raw, 0, 1);
  out.sigma2 = tape.add_scalar(tape.softplus(tape.slice_channels(raw, 1, 1)), kVarianceFloor);
  return out;
}

GaussianOutput predict_gaussian(const UNetParams& params, const Tensor& x, bool dropout_active, Rng& rng) {
  if (params.config().head != HeadKind::Gaussian) {
    throw ContractError("predict_gaussian: model has a quantile head");
  }
  Tape tape(false);
  Var in = tape.constant(as_batch(x));
  if (tape.value(in).dim(0) != 1) throw DimensionError("predict_gaussian: expects a single sample");
  auto head = gaussian_head(tape, forward(tape, params, in, dropout_active, rng));
  return {grid_from_channel(tape.value(head.mu), 0, 0, Unit::Ppb),
          grid_from_channel(tape.value(head.sigma2), 0, 0, Unit::PpbSquared)};
}

QuantileOutput predict_quantiles(const UNetParams& params, const Tensor& x) {
  if (params.config().head != HeadKind::QuantileTriplet) {
    throw ContractError("predict_quantiles: model has a Gaussian head");
  }
  Rng unused(0);
  const Tensor out = forward(params, x, false, unused);
  if (out.dim(0) != 1) throw DimensionError("predict_quantiles: expects a single sample");
  return {grid_from_channel(out, 0, 0, Unit::Ppb), grid_from_channel(out, 0, 1, Unit::Ppb),
          grid_from_channel(out, 0, 2, Unit::Ppb)};
}

}  // namespace griduq
