#include "griduq/metrics.hpp"

#include <cmath>

#include "griduq/errors.hpp"

namespace griduq {

double masked_rmse(const Grid& pred, const Grid& y, const Mask& mask) {
  RmseAccumulator acc;
  acc.add(pred, y, mask);
  return acc.rmse();
}

void RmseAccumulator::add(const Grid& pred, const Grid& y, const Mask& mask) {
  require_same_dims("masked_rmse(pred)", pred.rows, pred.cols, mask.rows, mask.cols);
  require_same_dims("masked_rmse(y)", y.rows, y.cols, mask.rows, mask.cols);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.cells[i]) continue;
    const double e = static_cast<double>(pred.values[i]) - y.values[i];
    sum_sq_ += e * e;
    ++count_;
  }
}

double RmseAccumulator::rmse() const {
  if (count_ == 0) throw ContractError("masked_rmse: empty mask");
  return std::sqrt(sum_sq_ / static_cast<double>(count_));
}

double SeedAggregate::stddev() const { return std::sqrt(variance); }

SeedAggregate aggregate_seeds(std::span<const double> values) {
  if (values.empty()) throw ContractError("aggregate_seeds: no values");
  SeedAggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  for (double v : values) a.variance += (v - a.mean) * (v - a.mean);
  a.variance /= static_cast<double>(values.size());
  return a;
}

}  // namespace griduq
