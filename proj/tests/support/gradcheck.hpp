#pragma once

// Finite-difference gradient checks for every differentiable tape op.
// The numeric side never touches library code: each op has an independent
// double-precision loop implementation here, and central differences are
// taken on that.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace griduq::testing {

struct GradCheckResult {
  /// max over inputs of ||analytic - numeric||_2 / ||numeric||_2
  double rel_error = 0.0;
  std::string case_name;
};

struct OpGradCheck {
  std::string op;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

/// One entry per tape op (plus the two tape losses); each draws its own
/// shapes and values from the seed.
const std::vector<OpGradCheck>& all_gradient_checks();

inline constexpr double kGradTolerance = 1e-3;

}  // namespace griduq::testing
