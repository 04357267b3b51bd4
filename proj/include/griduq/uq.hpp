#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "griduq/data.hpp"
#include "griduq/grid.hpp"
#include "griduq/model.hpp"
#include "griduq/random.hpp"

namespace griduq {

// ---------------------------------------------------------------------------
// Monte-Carlo dropout

struct McdPrediction {
  Grid mean;       // ppb
  Grid epistemic;  // ppb^2, population variance of the per-pass means
  Grid aleatoric;  // ppb^2, average predicted variance
  int passes = 0;

  /// epistemic + aleatoric, pixelwise.
  Grid total_variance() const;
};

/// Combines T stochastic passes in pass order.
McdPrediction aggregate_passes(std::span<const GaussianOutput> passes);

/// T forward passes with dropout active. Pass t draws its masks from its
/// own stream derived from one base seed taken from `rng`, so passes can
/// run concurrently and the result does not depend on scheduling.
McdPrediction mc_dropout_predict(const UNetParams& params, const Tensor& x, int passes, Rng& rng);

// ---------------------------------------------------------------------------
// Conformalized quantile regression

struct CqrPrediction {
  Grid lo;               // q_lo - qhat
  Grid mid;              // median head, unchanged
  Grid hi;               // q_hi + qhat
  Grid interval_length;  // hi - lo
  double qhat = 0.0;
  double alpha = 0.1;
};

/// 1-based rank ceil((n+1)(1-alpha)) of the conformal order statistic.
/// Throws CalibrationError when it exceeds n, naming the minimum n.
std::size_t conformal_rank(std::size_t n, double alpha);

/// The conformal_rank-th smallest score.
double conformal_quantile(std::span<const double> scores, double alpha);

/// Scores max(q_lo - y, y - q_hi) over every station pixel of every
/// calibration day, in day then row-major pixel order.
std::vector<double> conformity_scores(const UNetParams& params, std::span<const GridSample> calibration);

inline constexpr std::size_t kMinCalibrationPixels = 20;

/// Global split-conformal correction pooled over all calibration pixels.
double cqr_calibrate(const UNetParams& params, std::span<const GridSample> calibration, double alpha);

CqrPrediction conformalize(const QuantileOutput& raw, double qhat, double alpha);
CqrPrediction cqr_predict(const UNetParams& params, const Tensor& x, double qhat, double alpha);

}  // namespace griduq
