#pragma once

#include <cstdint>
#include <span>

#include "griduq/autodiff.hpp"
#include "griduq/grid.hpp"

namespace griduq {

// Masked objectives. Every loss is the mean over pixels whose mask is set;
// unmasked pixels contribute neither value nor gradient.

/// Mean over masked pixels of 0.5*(ln(2*pi*sigma2) + (y-mu)^2/sigma2).
double gaussian_nll(const Grid& mu, const Grid& sigma2, const Grid& y, const Mask& mask);

/// Mean over masked pixels of rho_tau(y - q), rho_tau(u) = u*(tau - 1[u<0]).
double pinball(const Grid& q, const Grid& y, double tau, const Mask& mask);

/// Pointwise check function rho_tau(u).
inline double pinball_point(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

// Tape versions used for training. mu/sigma2/q are [N,1,H,W]; y has the
// same element count and mask selects the pixels that enter the mean.

Var gaussian_nll(Tape& tape, Var mu, Var sigma2, std::span<const float> y, std::span<const std::uint8_t> mask);
Var pinball(Tape& tape, Var q, std::span<const float> y, float tau, std::span<const std::uint8_t> mask);

}  // namespace griduq
