#include "griduq/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

void check_grid(const char* what, const Grid& g, const Mask& mask) {
  require_same_dims(what, g.rows, g.cols, mask.rows, mask.cols);
}

void check_sizes(const char* what, std::size_t pred, std::size_t y, std::size_t mask) {
  if (pred != y || pred != mask) {
    throw DimensionError(fmt::format("{}: prediction has {} pixels, target {}, mask {}", what, pred, y, mask));
  }
}

}  // namespace

double gaussian_nll(const Grid& mu, const Grid& sigma2, const Grid& y, const Mask& mask) {
  check_grid("gaussian_nll(mu)", mu, mask);
  check_grid("gaussian_nll(sigma2)", sigma2, mask);
  check_grid("gaussian_nll(y)", y, mask);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.cells[i]) continue;
    const double s2 = sigma2.values[i];
    if (s2 <= 0.0) throw ContractError(fmt::format("gaussian_nll: nonpositive variance {} at pixel {}", s2, i));
    const double r = static_cast<double>(y.values[i]) - mu.values[i];
    acc += 0.5 * (kLog2Pi + std::log(s2) + r * r / s2);
    ++n;
  }
  if (n == 0) throw ContractError("gaussian_nll: empty mask");
  return acc / static_cast<double>(n);
}

double pinball(const Grid& q, const Grid& y, double tau, const Mask& mask) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError(fmt::format("pinball: tau {} outside (0,1)", tau));
  check_grid("pinball(q)", q, mask);
  check_grid("pinball(y)", y, mask);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.cells[i]) continue;
    acc += pinball_point(static_cast<double>(y.values[i]) - q.values[i], tau);
    ++n;
  }
  if (n == 0) throw ContractError("pinball: empty mask");
  return acc / static_cast<double>(n);
}

Var gaussian_nll(Tape& tape, Var mu, Var sigma2, std::span<const float> y, std::span<const std::uint8_t> mask) {
  const Tensor& m = tape.value(mu);
  const Tensor& s = tape.value(sigma2);
  if (m.shape() != s.shape()) {
    throw DimensionError(fmt::format("gaussian_nll: mu {} vs sigma2 {}", shape_str(m.shape()), shape_str(s.shape())));
  }
  check_sizes("gaussian_nll", m.numel(), y.size(), mask.size());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double s2 = s[i];
    if (s2 <= 0.0) throw ContractError(fmt::format("gaussian_nll: nonpositive variance {} at pixel {}", s2, i));
    const double r = static_cast<double>(y[i]) - m[i];
    acc += 0.5 * (kLog2Pi + std::log(s2) + r * r / s2);
    ++n;
  }
  if (n == 0) throw ContractError("gaussian_nll: empty mask");
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<float> target(y.begin(), y.end());
  std::vector<std::uint8_t> sel(mask.begin(), mask.end());
  return tape.record(Tensor::scalar(static_cast<float>(acc * inv)), {mu, sigma2},
                     [mu, sigma2, target = std::move(target), sel = std::move(sel), inv](
                         Tape& t, std::span<const float> gy) {
                       const auto mv = t.value(mu).data();
                       const auto sv = t.value(sigma2).data();
                       const double g = gy[0] * inv;
                       const bool need_mu = t.requires_grad(mu);
                       const bool need_s = t.requires_grad(sigma2);
                       std::span<float> gmu = need_mu ? t.accumulate(mu) : std::span<float>{};
                       std::span<float> gs = need_s ? t.accumulate(sigma2) : std::span<float>{};
                       for (std::size_t i = 0; i < sel.size(); ++i) {
                         if (!sel[i]) continue;
                         const double s2 = sv[i];
                         const double r = static_cast<double>(target[i]) - mv[i];
                         if (need_mu) gmu[i] += static_cast<float>(-g * r / s2);
                         if (need_s) gs[i] += static_cast<float>(g * 0.5 * (1.0 / s2 - r * r / (s2 * s2)));
                       }
                     });
}

Var pinball(Tape& tape, Var q, std::span<const float> y, float tau, std::span<const std::uint8_t> mask) {
  if (!(tau > 0.0f && tau < 1.0f)) throw ContractError(fmt::format("pinball: tau {} outside (0,1)", tau));
  const Tensor& qv = tape.value(q);
  check_sizes("pinball", qv.numel(), y.size(), mask.size());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    acc += pinball_point(static_cast<double>(y[i]) - qv[i], tau);
    ++n;
  }
  if (n == 0) throw ContractError("pinball: empty mask");
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<float> target(y.begin(), y.end());
  std::vector<std::uint8_t> sel(mask.begin(), mask.end());
  return tape.record(Tensor::scalar(static_cast<float>(acc * inv)), {q},
                     [q, tau, target = std::move(target), sel = std::move(sel), inv](Tape& t,
                                                                                     std::span<const float> gy) {
                       const auto qv = t.value(q).data();
                       auto gq = t.accumulate(q);
                       const double g = gy[0] * inv;
                       for (std::size_t i = 0; i < sel.size(); ++i) {
                         if (!sel[i]) continue;
                         const double u = static_cast<double>(target[i]) - qv[i];
                         // d rho/d q = -(tau - 1[u<0])
                         gq[i] += static_cast<float>(-g * (tau - (u < 0.0 ? 1.0 : 0.0)));
                       }
                     });
}

}  // namespace griduq
