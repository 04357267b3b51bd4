#include "griduq/uq.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

Grid McdPrediction::total_variance() const {
  Grid out(epistemic.rows, epistemic.cols, Unit::PpbSquared);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = epistemic.values[i] + aleatoric.values[i];
  return out;
}

McdPrediction aggregate_passes(std::span<const GaussianOutput> passes) {
  if (passes.size() < 2) throw ContractError(fmt::format("MC dropout needs T >= 2 passes, got {}", passes.size()));
  const int rows = passes[0].mu.rows, cols = passes[0].mu.cols;
  for (const auto& p : passes) {
    require_same_dims("aggregate_passes(mu)", p.mu.rows, p.mu.cols, rows, cols);
    require_same_dims("aggregate_passes(sigma2)", p.sigma2.rows, p.sigma2.cols, rows, cols);
  }
  McdPrediction out;
  out.passes = static_cast<int>(passes.size());
  out.mean = Grid(rows, cols, Unit::Ppb);
  out.epistemic = Grid(rows, cols, Unit::PpbSquared);
  out.aleatoric = Grid(rows, cols, Unit::PpbSquared);
  const double inv_t = 1.0 / static_cast<double>(passes.size());
  for (std::size_t i = 0; i < out.mean.size(); ++i) {
    double mu_sum = 0.0, s2_sum = 0.0;
    for (const auto& p : passes) {
      mu_sum += p.mu.values[i];
      s2_sum += p.sigma2.values[i];
    }
    const double mean = mu_sum * inv_t;
    double dev = 0.0;
    for (const auto& p : passes) dev += (p.mu.values[i] - mean) * (p.mu.values[i] - mean);
    out.mean.values[i] = static_cast<float>(mean);
    out.epistemic.values[i] = static_cast<float>(dev * inv_t);
    out.aleatoric.values[i] = static_cast<float>(s2_sum * inv_t);
  }
  return out;
}

McdPrediction mc_dropout_predict(const UNetParams& params, const Tensor& x, int passes, Rng& rng) {
  if (passes < 2) throw ContractError(fmt::format("MC dropout needs T >= 2 passes, got {}", passes));
  if (params.config().head != HeadKind::Gaussian) throw ContractError("MC dropout requires a Gaussian head");
  const std::uint64_t base = rng();
  std::vector<GaussianOutput> outs(static_cast<std::size_t>(passes));
#pragma omp parallel for schedule(static)
  for (int t = 0; t < passes; ++t) {
    Rng pass_rng(derive_seed(base, static_cast<std::uint64_t>(t)));
    outs[static_cast<std::size_t>(t)] = predict_gaussian(params, x, true, pass_rng);
  }
  return aggregate_passes(outs);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError(fmt::format("alpha {} outside (0,1)", alpha));
  auto rank_for = [alpha](std::size_t m) {
    const double target = static_cast<double>(m + 1) * (1.0 - alpha);
    // Guard against 0.9*100 landing a hair above an integer.
    return static_cast<std::size_t>(std::ceil(target - 1e-9 * target));
  };
  const std::size_t k = rank_for(n);
  if (k > n || n == 0) {
    std::size_t min_n = 1;
    while (rank_for(min_n) > min_n) ++min_n;
    throw CalibrationError(fmt::format(
        "calibration set has {} scores; alpha={} needs n >= {} so that ceil((n+1)(1-alpha)) <= n", n, alpha, min_n));
  }
  return std::max<std::size_t>(k, 1);
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  const std::size_t k = conformal_rank(scores.size(), alpha);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

std::vector<double> conformity_scores(const UNetParams& params, std::span<const GridSample> calibration) {
  std::vector<double> scores;
  for (const auto& s : calibration) {
    const auto q = predict_quantiles(params, s.x);
    require_same_dims("conformity_scores", q.lo.rows, q.lo.cols, s.mask.rows, s.mask.cols);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (!s.mask.cells[i]) continue;
      const double y = s.y.values[i];
      scores.push_back(std::max(static_cast<double>(q.lo.values[i]) - y, y - static_cast<double>(q.hi.values[i])));
    }
  }
  return scores;
}

double cqr_calibrate(const UNetParams& params, std::span<const GridSample> calibration, double alpha) {
  const auto scores = conformity_scores(params, calibration);
  if (scores.size() < kMinCalibrationPixels) {
    throw CalibrationError(fmt::format("calibration set has {} station pixels; at least {} are required",
                                       scores.size(), kMinCalibrationPixels));
  }
  return conformal_quantile(scores, alpha);
}

CqrPrediction conformalize(const QuantileOutput& raw, double qhat, double alpha) {
  if (!std::isfinite(qhat)) throw ContractError("conformalize: qhat must be finite");
  CqrPrediction out;
  out.qhat = qhat;
  out.alpha = alpha;
  out.mid = raw.mid;
  out.lo = Grid(raw.lo.rows, raw.lo.cols, Unit::Ppb);
  out.hi = Grid(raw.hi.rows, raw.hi.cols, Unit::Ppb);
  out.interval_length = Grid(raw.lo.rows, raw.lo.cols, Unit::Ppb);
  for (std::size_t i = 0; i < out.lo.size(); ++i) {
    out.lo.values[i] = static_cast<float>(raw.lo.values[i] - qhat);
    out.hi.values[i] = static_cast<float>(raw.hi.values[i] + qhat);
    out.interval_length.values[i] = out.hi.values[i] - out.lo.values[i];
  }
  return out;
}

CqrPrediction cqr_predict(const UNetParams& params, const Tensor& x, double qhat, double alpha) {
  return conformalize(predict_quantiles(params, x), qhat, alpha);
}

}  // namespace griduq
