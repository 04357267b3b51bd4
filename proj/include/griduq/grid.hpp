#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "griduq/tensor.hpp"

namespace griduq {

enum class Unit { Ppb, PpbSquared, Dimensionless };

const char* unit_name(Unit u);

/// Single-channel rows x cols raster of float32 values, row 0 = northmost.
struct Grid {
  int rows = 0;
  int cols = 0;
  Unit unit = Unit::Ppb;
  std::vector<float> values;

  Grid() = default;
  Grid(int r, int c, Unit u = Unit::Ppb, float fill = 0.0f)
      : rows(r), cols(c), unit(u), values(static_cast<std::size_t>(r) * c, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// true where a ground-truth value exists (station coverage).
struct Mask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(int r, int c, bool fill = false)
      : rows(r), cols(c), cells(static_cast<std::size_t>(r) * c, fill ? 1 : 0) {}

  std::size_t size() const noexcept { return cells.size(); }
  bool at(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c] != 0; }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Throws DimensionError naming `what` unless both rasters are rows x cols.
void require_same_dims(const char* what, int rows_a, int cols_a, int rows_b, int cols_b);

/// Channel `c` of sample `n` of an [N,C,H,W] tensor.
Grid grid_from_channel(const Tensor& t, int n, int c, Unit unit);

}  // namespace griduq
