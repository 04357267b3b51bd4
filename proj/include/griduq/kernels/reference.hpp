#pragma once

// Serial reference kernels. Straight loops over output (or gradient)
// elements; kept for testing and benchmarking the parallel versions.

#include <limits>
#include <span>

#include "griduq/kernels/geometry.hpp"

namespace griduq::kernels::reference {

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride + ky - g.padding;
                const int ix = ox * g.stride + kx - g.padding;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          y[((static_cast<std::size_t>(n) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox] = acc;
        }
}

/// gx = d(sum(gy * conv(x)))/dx. Overwrites gx.
template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  for (int n = 0; n < g.batch; ++n)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int iy = 0; iy < g.in_h; ++iy)
        for (int ix = 0; ix < g.in_w; ++ix) {
          T acc = 0;
          for (int co = 0; co < g.out_channels; ++co)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int ty = iy + g.padding - ky;
                const int tx = ix + g.padding - kx;
                if (ty < 0 || tx < 0 || ty % g.stride != 0 || tx % g.stride != 0) continue;
                const int oy = ty / g.stride;
                const int ox = tx / g.stride;
                if (oy >= g.out_h || ox >= g.out_w) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       gy[((static_cast<std::size_t>(n) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
              }
          gx[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] = acc;
        }
}

/// Weight and bias gradients, accumulated in double. Overwrites gw and gb;
/// gb may be empty.
template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gb) {
  for (int co = 0; co < g.out_channels; ++co)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int ky = 0; ky < g.kernel_h; ++ky)
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          double acc = 0.0;
          for (int n = 0; n < g.batch; ++n)
            for (int oy = 0; oy < g.out_h; ++oy)
              for (int ox = 0; ox < g.out_w; ++ox) {
                const int iy = oy * g.stride + ky - g.padding;
                const int ix = ox * g.stride + kx - g.padding;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(
                           gy[((static_cast<std::size_t>(n) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox]) *
                       static_cast<double>(
                           x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix]);
              }
          gw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] = static_cast<T>(acc);
        }
  if (gb.empty()) return;
  for (int co = 0; co < g.out_channels; ++co) {
    double acc = 0.0;
    for (int n = 0; n < g.batch; ++n)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox)
          acc += static_cast<double>(
              gy[((static_cast<std::size_t>(n) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox]);
    gb[co] = static_cast<T>(acc);
  }
}

/// Non-overlapping window max. argmax holds the flat input index of the
/// first (row-major) maximal element of each window.
template <typename T>
void maxpool2d_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<int> argmax) {
  const int k = g.window;
  for (int plane = 0; plane < g.batch * g.channels; ++plane)
    for (int oy = 0; oy < g.out_h; ++oy)
      for (int ox = 0; ox < g.out_w; ++ox) {
        const std::size_t base = static_cast<std::size_t>(plane) * g.in_h * g.in_w;
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base + static_cast<std::size_t>(oy * k) * g.in_w + ox * k;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const std::size_t idx = base + static_cast<std::size_t>(oy * k + dy) * g.in_w + (ox * k + dx);
            if (x[idx] > best || x[idx] != x[idx]) {  // NaN wins and sticks
              best = x[idx];
              best_idx = idx;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(plane) * g.out_h + oy) * g.out_w + ox;
        y[o] = x[best_idx];
        argmax[o] = static_cast<int>(best_idx);
      }
}

template <typename T>
void maxpool2d_backward(const PoolGeometry& g, std::span<const T> gy, std::span<const int> argmax,
                        std::span<T> gx) {
  for (std::size_t i = 0; i < g.input_size(); ++i) gx[i] = 0;
  for (std::size_t o = 0; o < g.output_size(); ++o) gx[static_cast<std::size_t>(argmax[o])] += gy[o];
}

}  // namespace griduq::kernels::reference
