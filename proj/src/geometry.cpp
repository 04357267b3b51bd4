#include "griduq/kernels/geometry.hpp"

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq::kernels {

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weight, int stride, int padding) {
  if (input.size() != 4) throw DimensionError("conv2d: input must be [N,C,H,W], got " + shape_str(input));
  if (weight.size() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(weight));
  if (stride < 1) throw DimensionError(fmt::format("conv2d: stride must be >= 1, got {}", stride));
  if (padding < 0) throw DimensionError(fmt::format("conv2d: padding must be >= 0, got {}", padding));
  if (weight[2] < 1 || weight[3] < 1) throw DimensionError("conv2d: kernel dims must be >= 1, got " + shape_str(weight));
  if (input[1] != weight[1]) {
    throw DimensionError(fmt::format("conv2d: input channel axis (C={}) does not match weight Cin axis ({})",
                                     input[1], weight[1]));
  }
  Conv2dGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = weight[0];
  g.kernel_h = weight[2];
  g.kernel_w = weight[3];
  g.stride = stride;
  g.padding = padding;
  const int span_h = g.in_h + 2 * padding - g.kernel_h;
  const int span_w = g.in_w + 2 * padding - g.kernel_w;
  if (span_h < 0 || span_w < 0) {
    throw DimensionError(fmt::format("conv2d: kernel {}x{} larger than padded input H={} W={}",
                                     g.kernel_h, g.kernel_w, g.in_h + 2 * padding, g.in_w + 2 * padding));
  }
  if (span_h % stride != 0) {
    throw DimensionError(fmt::format("conv2d: H axis (H+2p-kh={}) not divisible by stride {}", span_h, stride));
  }
  if (span_w % stride != 0) {
    throw DimensionError(fmt::format("conv2d: W axis (W+2p-kw={}) not divisible by stride {}", span_w, stride));
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

Conv2dGeometry conv_transpose2d_geometry(const Shape& input, const Shape& weight, int stride) {
  if (input.size() != 4) throw DimensionError("conv_transpose2d: input must be [N,C,H,W], got " + shape_str(input));
  if (weight.size() != 4) {
    throw DimensionError("conv_transpose2d: weight must be [Cin,Cout,kh,kw], got " + shape_str(weight));
  }
  if (stride < 1 || stride > 2) {
    throw DimensionError(fmt::format("conv_transpose2d: stride must be 1 or 2, got {}", stride));
  }
  if (input[1] != weight[0]) {
    throw DimensionError(fmt::format(
        "conv_transpose2d: input channel axis (C={}) does not match weight Cin axis ({})", input[1], weight[0]));
  }
  if (weight[2] < 1 || weight[3] < 1) {
    throw DimensionError("conv_transpose2d: kernel dims must be >= 1, got " + shape_str(weight));
  }
  Conv2dGeometry g;
  g.batch = input[0];
  g.out_channels = weight[0];
  g.in_channels = weight[1];
  g.kernel_h = weight[2];
  g.kernel_w = weight[3];
  g.stride = stride;
  g.padding = 0;
  g.out_h = input[2];
  g.out_w = input[3];
  g.in_h = (input[2] - 1) * stride + g.kernel_h;
  g.in_w = (input[3] - 1) * stride + g.kernel_w;
  return g;
}

PoolGeometry pool_geometry(const Shape& input, int window) {
  if (input.size() != 4) throw DimensionError("maxpool2d: input must be [N,C,H,W], got " + shape_str(input));
  if (window < 1) throw DimensionError(fmt::format("maxpool2d: window must be >= 1, got {}", window));
  if (input[2] % window != 0) {
    throw DimensionError(fmt::format("maxpool2d: H axis ({}) not divisible by window {}", input[2], window));
  }
  if (input[3] % window != 0) {
    throw DimensionError(fmt::format("maxpool2d: W axis ({}) not divisible by window {}", input[3], window));
  }
  PoolGeometry g;
  g.batch = input[0];
  g.channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.window = window;
  g.out_h = input[2] / window;
  g.out_w = input[3] / window;
  return g;
}

}  // namespace griduq::kernels
