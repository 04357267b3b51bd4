#include "griduq/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "griduq/errors.hpp"
#include "griduq/kernels/parallel.hpp"

namespace griduq {

namespace kp = kernels::parallel;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
  }
}

void require_rank4(const char* op, const Tensor& t) {
  if (t.rank() != 4) throw DimensionError(fmt::format("{}: expected [N,C,H,W], got {}", op, shape_str(t.shape())));
}

void add_into(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

float softplus_value(float x) {
  // x + log1p(exp(-x)) for positive x keeps exp from overflowing.
  return x > 0.0f ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractError("invalid Var handle");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractError("invalid Var handle");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor& t) {
  Node n;
  n.external = &t;
  n.grad_sink = &t;
  n.requires_grad = recording_ && t.requires_grad();
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& t) {
  Node n;
  n.external = &t;
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  return push(std::move(n));
}

Var Tape::variable(Tensor t) {
  Node n;
  n.owned = std::move(t);
  n.requires_grad = recording_;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.owned;
}

std::span<const float> Tape::grad(Var v) const { return node(v).grad; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<float> Tape::accumulate(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad.assign(value(v).numel(), 0.0f);
  return n.grad;
}

Var Tape::record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(out);
  bool any = false;
  for (Var in : inputs)
    if (in.valid() && node(in).requires_grad) any = true;
  n.requires_grad = recording_ && any;
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(lv.shape()));
  }
  if (!recording_) throw ContractError("backward: tape was created without gradient recording");
  accumulate(loss)[0] += 1.0f;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.grad_sink == nullptr || !n.requires_grad) continue;
    auto dst = n.grad_sink->ensure_grad();
    if (!n.grad.empty()) add_into(dst, n.grad);
  }
}

Var Tape::conv2d(Var x, Var weight, Var bias, int stride, int padding) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  const auto g = kernels::conv2d_geometry(xv.shape(), wv.shape(), stride, padding);
  std::span<const float> bv;
  if (bias.valid()) {
    bv = value(bias).data();
    if (bv.size() != static_cast<std::size_t>(g.out_channels)) {
      throw DimensionError(fmt::format("conv2d: bias has {} entries, Cout axis is {}", bv.size(), g.out_channels));
    }
  }
  Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
  kp::conv2d_forward<float>(g, xv.data(), wv.data(), bv, out.data());
  return record(std::move(out), {x, weight, bias}, [x, weight, bias, g](Tape& t, std::span<const float> gy) {
    if (t.requires_grad(x)) {
      std::vector<float> gx(g.input_size());
      kp::conv2d_backward_input<float>(g, gy, t.value(weight).data(), gx);
      add_into(t.accumulate(x), gx);
    }
    const bool need_w = t.requires_grad(weight);
    const bool need_b = bias.valid() && t.requires_grad(bias);
    if (need_w || need_b) {
      std::vector<float> gw(g.weight_size());
      std::vector<float> gb(need_b ? g.out_channels : 0);
      kp::conv2d_backward_weight<float>(g, t.value(x).data(), gy, gw, gb);
      if (need_w) add_into(t.accumulate(weight), gw);
      if (need_b) add_into(t.accumulate(bias), gb);
    }
  });
}

Var Tape::conv_transpose2d(Var x, Var weight, Var bias, int stride) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  const auto g = kernels::conv_transpose2d_geometry(xv.shape(), wv.shape(), stride);
  const int out_c = g.in_channels;
  Tensor out({g.batch, out_c, g.in_h, g.in_w});
  kp::conv2d_backward_input<float>(g, xv.data(), wv.data(), out.data());
  if (bias.valid()) {
    auto bv = value(bias).data();
    if (bv.size() != static_cast<std::size_t>(out_c)) {
      throw DimensionError(fmt::format("conv_transpose2d: bias has {} entries, Cout axis is {}", bv.size(), out_c));
    }
    const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    auto od = out.data();
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < out_c; ++c) {
        float* p = od.data() + (static_cast<std::size_t>(n) * out_c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += bv[c];
      }
  }
  return record(std::move(out), {x, weight, bias}, [x, weight, bias, g](Tape& t, std::span<const float> gy) {
    if (t.requires_grad(x)) {
      std::vector<float> gx(g.output_size());
      kp::conv2d_forward<float>(g, gy, t.value(weight).data(), {}, gx);
      add_into(t.accumulate(x), gx);
    }
    if (t.requires_grad(weight)) {
      std::vector<float> gw(g.weight_size());
      kp::conv2d_backward_weight<float>(g, gy, t.value(x).data(), gw, {});
      add_into(t.accumulate(weight), gw);
    }
    if (bias.valid() && t.requires_grad(bias)) {
      auto gb = t.accumulate(bias);
      const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
      for (int c = 0; c < g.in_channels; ++c) {
        double acc = 0.0;
        for (int n = 0; n < g.batch; ++n) {
          const float* p = gy.data() + (static_cast<std::size_t>(n) * g.in_channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        }
        gb[c] += static_cast<float>(acc);
      }
    }
  });
}

Var Tape::maxpool2d(Var x, int k, std::vector<int>* argmax) {
  const Tensor& xv = value(x);
  const auto g = kernels::pool_geometry(xv.shape(), k);
  Tensor out({g.batch, g.channels, g.out_h, g.out_w});
  std::vector<int> idx(g.output_size());
  kp::maxpool2d_forward<float>(g, xv.data(), out.data(), idx);
  if (argmax) *argmax = idx;
  return record(std::move(out), {x}, [x, g, idx = std::move(idx)](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[static_cast<std::size_t>(idx[o])] += gy[o];
  });
}

Var Tape::relu(Var x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  auto in = xv.data();
  auto od = out.data();
  // NaN compares false and passes through, so bad inputs surface in the loss.
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = in[i] < 0.0f ? 0.0f : in[i];
  return record(std::move(out), {x}, [x](Tape& t, std::span<const float> gy) {
    auto in = t.value(x).data();
    auto gx = t.accumulate(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (in[i] > 0.0f) gx[i] += gy[i];
  });
}

Var Tape::softplus(Var x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  auto in = xv.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = softplus_value(in[i]);
  return record(std::move(out), {x}, [x](Tape& t, std::span<const float> gy) {
    auto in = t.value(x).data();
    auto gx = t.accumulate(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * sigmoid(in[i]);
  });
}

Var Tape::exp(Var x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  auto in = xv.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::exp(in[i]);
  Var self{nodes_.size()};
  return record(std::move(out), {x}, [x, self](Tape& t, std::span<const float> gy) {
    auto y = t.value(self).data();
    auto gx = t.accumulate(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i];
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape("add", av, bv);
  Tensor out(av.shape());
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = av[i] + bv[i];
  return record(std::move(out), {a, b}, [a, b](Tape& t, std::span<const float> gy) {
    if (t.requires_grad(a)) add_into(t.accumulate(a), gy);
    if (t.requires_grad(b)) add_into(t.accumulate(b), gy);
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape("mul", av, bv);
  Tensor out(av.shape());
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = av[i] * bv[i];
  return record(std::move(out), {a, b}, [a, b](Tape& t, std::span<const float> gy) {
    if (t.requires_grad(a)) {
      auto other = t.value(b).data();
      auto ga = t.accumulate(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * other[i];
    }
    if (t.requires_grad(b)) {
      auto other = t.value(a).data();
      auto gb = t.accumulate(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * other[i];
    }
  });
}

Var Tape::add_scalar(Var x, float c) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xv[i] + c;
  return record(std::move(out), {x}, [x](Tape& t, std::span<const float> gy) { add_into(t.accumulate(x), gy); });
}

Var Tape::concat_channels(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank4("concat_channels", av);
  require_rank4("concat_channels", bv);
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw DimensionError(fmt::format("concat_channels: N/H/W axes differ: {} vs {}", shape_str(av.shape()),
                                     shape_str(bv.shape())));
  }
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(av.dim(2)) * av.dim(3);
  Tensor out({n, ca + cb, av.dim(2), av.dim(3)});
  auto od = out.data();
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.data().data() + i * ca * plane, ca * plane, od.data() + i * (ca + cb) * plane);
    std::copy_n(bv.data().data() + i * cb * plane, cb * plane, od.data() + (i * (ca + cb) + ca) * plane);
  }
  return record(std::move(out), {a, b}, [a, b, n, ca, cb, plane](Tape& t, std::span<const float> gy) {
    if (t.requires_grad(a)) {
      auto ga = t.accumulate(a);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ca * plane; ++j) ga[i * ca * plane + j] += gy[i * (ca + cb) * plane + j];
    }
    if (t.requires_grad(b)) {
      auto gb = t.accumulate(b);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cb * plane; ++j) gb[i * cb * plane + j] += gy[(i * (ca + cb) + ca) * plane + j];
    }
  });
}

Var Tape::slice_channels(Var x, int begin, int count) {
  const Tensor& xv = value(x);
  require_rank4("slice_channels", xv);
  const int n = xv.dim(0), c = xv.dim(1);
  if (begin < 0 || count < 1 || begin + count > c) {
    throw DimensionError(fmt::format("slice_channels: [{}, {}) outside C axis of size {}", begin, begin + count, c));
  }
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out({n, count, xv.dim(2), xv.dim(3)});
  for (int i = 0; i < n; ++i)
    std::copy_n(xv.data().data() + (i * c + begin) * plane, count * plane, out.data().data() + i * count * plane);
  return record(std::move(out), {x}, [x, n, c, begin, count, plane](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count * plane; ++j) gx[(i * c + begin) * plane + j] += gy[i * count * plane + j];
  });
}

Var Tape::pad_to(Var x, int h, int w) {
  const Tensor& xv = value(x);
  require_rank4("pad_to", xv);
  const int n = xv.dim(0), c = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
  if (h < ih || w < iw) {
    throw DimensionError(fmt::format("pad_to: target {}x{} smaller than input H={} W={}", h, w, ih, iw));
  }
  Tensor out({n, c, h, w});
  for (int p = 0; p < n * c; ++p)
    for (int r = 0; r < ih; ++r)
      std::copy_n(xv.data().data() + (static_cast<std::size_t>(p) * ih + r) * iw, iw,
                  out.data().data() + (static_cast<std::size_t>(p) * h + r) * w);
  return record(std::move(out), {x}, [x, n, c, ih, iw, h, w](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (int p = 0; p < n * c; ++p)
      for (int r = 0; r < ih; ++r)
        for (int q = 0; q < iw; ++q)
          gx[(static_cast<std::size_t>(p) * ih + r) * iw + q] += gy[(static_cast<std::size_t>(p) * h + r) * w + q];
  });
}

Var Tape::crop_to(Var x, int h, int w) {
  const Tensor& xv = value(x);
  require_rank4("crop_to", xv);
  const int n = xv.dim(0), c = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
  if (h > ih || w > iw || h < 1 || w < 1) {
    throw DimensionError(fmt::format("crop_to: target {}x{} not inside input H={} W={}", h, w, ih, iw));
  }
  Tensor out({n, c, h, w});
  for (int p = 0; p < n * c; ++p)
    for (int r = 0; r < h; ++r)
      std::copy_n(xv.data().data() + (static_cast<std::size_t>(p) * ih + r) * iw, w,
                  out.data().data() + (static_cast<std::size_t>(p) * h + r) * w);
  return record(std::move(out), {x}, [x, n, c, ih, iw, h, w](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (int p = 0; p < n * c; ++p)
      for (int r = 0; r < h; ++r)
        for (int q = 0; q < w; ++q)
          gx[(static_cast<std::size_t>(p) * ih + r) * iw + q] += gy[(static_cast<std::size_t>(p) * h + r) * w + q];
  });
}

Var Tape::dropout(Var x, float p, bool active, Rng& rng) {
  if (!(p >= 0.0f && p < 1.0f)) throw ContractError(fmt::format("dropout: rate {} outside [0,1)", p));
  if (!active || p == 0.0f) return x;
  const Tensor& xv = value(x);
  const auto cut = static_cast<std::uint64_t>(static_cast<double>(p) * 18446744073709551616.0);
  const float scale = 1.0f / (1.0f - p);
  std::vector<float> keep(xv.numel());
  for (auto& k : keep) k = rng() >= cut ? scale : 0.0f;
  Tensor out(xv.shape());
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xv[i] * keep[i];
  return record(std::move(out), {x}, [x, keep = std::move(keep)](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * keep[i];
  });
}

Var Tape::sum(Var x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (float v : xv.data()) acc += v;
  return record(Tensor::scalar(static_cast<float>(acc)), {x}, [x](Tape& t, std::span<const float> gy) {
    auto gx = t.accumulate(x);
    for (auto& g : gx) g += gy[0];
  });
}

Var Tape::mean_masked(Var x, std::span<const std::uint8_t> mask) {
  const Tensor& xv = value(x);
  if (mask.size() != xv.numel()) {
    throw DimensionError(fmt::format("mean_masked: mask has {} cells, input {} has {}", mask.size(),
                                     shape_str(xv.shape()), xv.numel()));
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      acc += xv[i];
      ++count;
    }
  if (count == 0) throw ContractError("mean_masked: mask selects no elements");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const float inv = static_cast<float>(1.0 / static_cast<double>(count));
  return record(Tensor::scalar(static_cast<float>(acc / static_cast<double>(count))), {x},
                [x, m = std::move(m), inv](Tape& t, std::span<const float> gy) {
                  auto gx = t.accumulate(x);
                  for (std::size_t i = 0; i < gx.size(); ++i)
                    if (m[i]) gx[i] += gy[0] * inv;
                });
}

}  // namespace griduq
