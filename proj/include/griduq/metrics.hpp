#pragma once

#include <cstddef>
#include <span>

#include "griduq/grid.hpp"

namespace griduq {

/// sqrt(mean over masked pixels of (pred - y)^2). Throws on an empty mask.
double masked_rmse(const Grid& pred, const Grid& y, const Mask& mask);

/// Pools squared errors over many days before taking the root.
class RmseAccumulator {
 public:
  void add(const Grid& pred, const Grid& y, const Mask& mask);
  std::size_t count() const noexcept { return count_; }
  double rmse() const;

 private:
  double sum_sq_ = 0.0;
  std::size_t count_ = 0;
};

/// Population mean and variance of per-seed scores.
struct SeedAggregate {
  double mean = 0.0;
  double variance = 0.0;
  double stddev() const;
};

SeedAggregate aggregate_seeds(std::span<const double> values);

}  // namespace griduq
