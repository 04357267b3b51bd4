#include "griduq/grid.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

const char* unit_name(Unit u) {
  switch (u) {
    case Unit::Ppb: return "ppb";
    case Unit::PpbSquared: return "ppb^2";
    case Unit::Dimensionless: return "1";
  }
  return "?";
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }));
}

void require_same_dims(const char* what, int rows_a, int cols_a, int rows_b, int cols_b) {
  if (rows_a != rows_b || cols_a != cols_b) {
    throw DimensionError(fmt::format("{}: raster dims {}x{} vs {}x{}", what, rows_a, cols_a, rows_b, cols_b));
  }
}

Grid grid_from_channel(const Tensor& t, int n, int c, Unit unit) {
  if (t.rank() != 4) throw DimensionError("grid_from_channel: expected [N,C,H,W], got " + shape_str(t.shape()));
  Grid g(t.dim(2), t.dim(3), unit);
  const std::size_t plane = g.size();
  const auto* src = t.data().data() + (static_cast<std::size_t>(n) * t.dim(1) + c) * plane;
  std::copy_n(src, plane, g.values.begin());
  return g;
}

}  // namespace griduq
