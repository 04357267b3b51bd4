#pragma once

// OpenMP kernels. Work is split over output-owned planes so every output
// element is accumulated in the same order as the serial reference, which
// makes results independent of the thread count.

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "griduq/kernels/geometry.hpp"

namespace griduq::kernels::parallel {

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int planes = g.batch * g.out_channels;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int n = p / g.out_channels;
    const int co = p % g.out_channels;
    T* out = y.data() + static_cast<std::size_t>(p) * out_plane;
    std::fill(out, out + out_plane, bias.empty() ? T(0) : bias[co]);
    for (int ci = 0; ci < g.in_channels; ++ci) {
      const T* in = x.data() + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane;
      const T* wk = w.data() + (static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        int oy_lo, oy_hi;
        valid_output_range(ky, g.stride, g.padding, g.in_h, g.out_h, oy_lo, oy_hi);
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          int ox_lo, ox_hi;
          valid_output_range(kx, g.stride, g.padding, g.in_w, g.out_w, ox_lo, ox_hi);
          const T wv = wk[ky * g.kernel_w + kx];
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const T* in_row = in + static_cast<std::size_t>(oy * g.stride + ky - g.padding) * g.in_w;
            T* out_row = out + static_cast<std::size_t>(oy) * g.out_w;
            if (g.stride == 1) {
              const T* src = in_row + (kx - g.padding);
              for (int ox = ox_lo; ox < ox_hi; ++ox) out_row[ox] += wv * src[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                out_row[ox] += wv * in_row[ox * g.stride + kx - g.padding];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int planes = g.batch * g.in_channels;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int n = p / g.in_channels;
    const int ci = p % g.in_channels;
    T* gin = gx.data() + static_cast<std::size_t>(p) * in_plane;
    std::fill(gin, gin + in_plane, T(0));
    for (int co = 0; co < g.out_channels; ++co) {
      const T* gout = gy.data() + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
      const T* wk = w.data() + (static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        int oy_lo, oy_hi;
        valid_output_range(ky, g.stride, g.padding, g.in_h, g.out_h, oy_lo, oy_hi);
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          int ox_lo, ox_hi;
          valid_output_range(kx, g.stride, g.padding, g.in_w, g.out_w, ox_lo, ox_hi);
          const T wv = wk[ky * g.kernel_w + kx];
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            T* gin_row = gin + static_cast<std::size_t>(oy * g.stride + ky - g.padding) * g.in_w;
            const T* gout_row = gout + static_cast<std::size_t>(oy) * g.out_w;
            if (g.stride == 1) {
              T* dst = gin_row + (kx - g.padding);
              for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += wv * gout_row[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                gin_row[ox * g.stride + kx - g.padding] += wv * gout_row[ox];
            }
          }
        }
      }
    }
  }
}

/// Dot product of one output row: eight independent partial sums, folded
/// into double once per row.
template <typename T>
inline double row_dot(const T* a, const T* b, int n) {
  T lanes[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  double acc = 0.0;
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  for (int l = 0; l < 8; ++l) acc += static_cast<double>(lanes[l]);
  return acc;
}

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gb) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int taps = g.in_channels * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.out_channels; ++co) {
    for (int t = 0; t < taps; ++t) {
      const int ci = t / (g.kernel_h * g.kernel_w);
      const int ky = (t / g.kernel_w) % g.kernel_h;
      const int kx = t % g.kernel_w;
      int oy_lo, oy_hi, ox_lo, ox_hi;
      valid_output_range(ky, g.stride, g.padding, g.in_h, g.out_h, oy_lo, oy_hi);
      valid_output_range(kx, g.stride, g.padding, g.in_w, g.out_w, ox_lo, ox_hi);
      double acc = 0.0;
      for (int n = 0; n < g.batch; ++n) {
        const T* gout = gy.data() + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
        const T* in = x.data() + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane;
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const T* gout_row = gout + static_cast<std::size_t>(oy) * g.out_w;
          const T* in_row = in + static_cast<std::size_t>(oy * g.stride + ky - g.padding) * g.in_w;
          if (g.stride == 1) {
            acc += row_dot(gout_row + ox_lo, in_row + (ox_lo + kx - g.padding), ox_hi - ox_lo);
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox)
              acc += static_cast<double>(gout_row[ox]) *
                     static_cast<double>(in_row[ox * g.stride + kx - g.padding]);
          }
        }
      }
      gw[static_cast<std::size_t>(co) * taps + t] = static_cast<T>(acc);
    }
    if (!gb.empty()) {
      double acc = 0.0;
      for (int n = 0; n < g.batch; ++n) {
        const T* gout = gy.data() + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) acc += static_cast<double>(gout[i]);
      }
      gb[co] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void maxpool2d_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<int> argmax) {
  const int k = g.window;
  const int planes = g.batch * g.channels;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * g.in_h * g.in_w;
    for (int oy = 0; oy < g.out_h; ++oy)
      for (int ox = 0; ox < g.out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base + static_cast<std::size_t>(oy * k) * g.in_w + ox * k;
        for (int dy = 0; dy < k; ++dy) {
          const std::size_t row = base + static_cast<std::size_t>(oy * k + dy) * g.in_w + ox * k;
          for (int dx = 0; dx < k; ++dx)
            if (x[row + dx] > best || x[row + dx] != x[row + dx]) {  // NaN wins and sticks
              best = x[row + dx];
              best_idx = row + dx;
            }
        }
        const std::size_t o = (static_cast<std::size_t>(plane) * g.out_h + oy) * g.out_w + ox;
        y[o] = x[best_idx];
        argmax[o] = static_cast<int>(best_idx);
      }
  }
}

template <typename T>
void maxpool2d_backward(const PoolGeometry& g, std::span<const T> gy, std::span<const int> argmax,
                        std::span<T> gx) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int planes = g.batch * g.channels;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    T* gin = gx.data() + static_cast<std::size_t>(plane) * in_plane;
    std::fill(gin, gin + in_plane, T(0));
    for (std::size_t o = plane * out_plane; o < (plane + 1) * out_plane; ++o)
      gx[static_cast<std::size_t>(argmax[o])] += gy[o];
  }
}

}  // namespace griduq::kernels::parallel
