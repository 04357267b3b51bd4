#pragma once

#include <cstddef>

#include "griduq/tensor.hpp"

namespace griduq::kernels {

/// Sizes of one 2-D cross-correlation. Transposed convolutions reuse this
/// with the roles of input and output swapped.
struct Conv2dGeometry {
  int batch = 0;
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  int out_h = 0;
  int out_w = 0;

  std::size_t input_size() const {
    return static_cast<std::size_t>(batch) * in_channels * in_h * in_w;
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(batch) * out_channels * out_h * out_w;
  }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }
};

/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw].
Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weight, int stride, int padding);

/// input [N,Cin,H,W], weight [Cin,Cout,kh,kw]; output (H-1)*stride + kh.
/// The returned geometry describes the forward conv whose adjoint this is:
/// its "input" is the transposed op's output.
Conv2dGeometry conv_transpose2d_geometry(const Shape& input, const Shape& weight, int stride);

struct PoolGeometry {
  int batch = 0;
  int channels = 0;
  int in_h = 0;
  int in_w = 0;
  int window = 2;
  int out_h = 0;
  int out_w = 0;

  std::size_t input_size() const {
    return static_cast<std::size_t>(batch) * channels * in_h * in_w;
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(batch) * channels * out_h * out_w;
  }
};

PoolGeometry pool_geometry(const Shape& input, int window);

/// Range of output columns [lo, hi) whose tap at kernel offset `k` reads
/// an in-bounds input column.
inline void valid_output_range(int k, int stride, int padding, int in_extent, int out_extent,
                               int& lo, int& hi) {
  // ox*stride + k - padding in [0, in_extent)
  int first = padding - k;
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  int last = in_extent - 1 + padding - k;  // ox*stride <= last
  hi = last < 0 ? 0 : last / stride + 1;
  if (hi > out_extent) hi = out_extent;
  if (lo > hi) lo = hi;
}

}  // namespace griduq::kernels
