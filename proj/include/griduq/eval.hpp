#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "griduq/data.hpp"
#include "griduq/grid.hpp"
#include "griduq/metrics.hpp"
#include "griduq/uq.hpp"

namespace griduq {

struct UqStats {
  double max = 0.0;
  double min = 0.0;
  double avg = 0.0;
};

/// Per-cell mean of `grids` over the days on which the cell is masked;
/// NaN for cells never masked.
Grid cell_time_mean(std::span<const Grid> grids, std::span<const Mask> masks);
/// Extremes and mean across cells of cell_time_mean. Throws ContractError
/// if no cell is ever masked.
UqStats cell_stats(std::span<const Grid> grids, std::span<const Mask> masks);

UqStats interval_stats(std::span<const CqrPrediction> preds, std::span<const Mask> masks);
UqStats epistemic_stats(std::span<const McdPrediction> preds, std::span<const Mask> masks);

/// Fraction of masked (pixel, day) pairs with lo <= y <= hi.
double empirical_coverage(std::span<const CqrPrediction> preds, std::span<const GridSample> samples);
/// Fraction of masked (pixel, day) pairs where the raw heads cross
/// (q_lo > q_hi, i.e. the conformalized length is below 2 qhat).
double crossing_rate(std::span<const CqrPrediction> preds, std::span<const Mask> masks);

/// Spearman correlation with average ranks for ties. NaN pairs are skipped.
double spearman(std::span<const double> a, std::span<const double> b);

struct StationEntry {
  int row = 0;
  int col = 0;
  double lat = 0.0;
  double lon = 0.0;
  double score = 0.0;  // mean UQ over the days the cell is masked
  double rmse = 0.0;   // masked RMSE of the point prediction at the cell
};

/// Masked cells by descending mean UQ; ties by (row, col) ascending.
struct StationRank {
  std::vector<StationEntry> entries;
};

/// `uq[d]` and `pred[d]` belong to `samples[d]`.
StationRank rank_stations(std::span<const Grid> uq, std::span<const Grid> pred, std::span<const GridSample> samples,
                          const RegionSpec& spec);

struct NamedGrid {
  std::string name;
  Grid grid;
};

/// Full-grid maps of one day, in a fixed order per method.
struct DayMaps {
  Date date{};
  std::vector<NamedGrid> maps;
};

/// lo, mid, hi, interval.
DayMaps cqr_maps(Date date, const CqrPrediction& p);
/// mean, epistemic, aleatoric, total.
DayMaps mcd_maps(Date date, const McdPrediction& p);

/// Pixelwise mean over members (e.g. seeds); fields averaged independently.
CqrPrediction average(std::span<const CqrPrediction> members);
McdPrediction average(std::span<const McdPrediction> members);

// ---------------------------------------------------------------------------
// Export

struct ColorScale {
  bool automatic = true;
  double lo = 0.0;
  double hi = 1.0;

  static ColorScale fixed(double lo, double hi) { return {false, lo, hi}; }
};

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kSentinelColor{128, 128, 128};

/// Diverging blue-white-red colour for t in [0,1] (clamped).
Rgb diverging_color(double t);

/// Binary P6 image, row 0 on top, `cell_px` pixels per cell edge.
/// Non-finite cells are gray. A constant grid renders as the mid colour.
void export_heatmap(const Grid& grid, const std::filesystem::path& path, ColorScale scale = {}, int cell_px = 1);

/// Header "row,col,lat,lon,value", one line per cell in row-major order,
/// values at 9 significant digits so float32 round-trips exactly.
void export_csv(const Grid& grid, const RegionSpec& spec, const std::filesystem::path& path);
Grid read_grid_csv(const std::filesystem::path& path, Unit unit = Unit::Ppb);

// ---------------------------------------------------------------------------
// Report

struct SeedMetrics {
  std::uint64_t seed = 0;
  double rmse = 0.0;
  std::optional<UqStats> interval;
  std::optional<UqStats> epistemic;
  std::optional<double> coverage;
  std::optional<double> crossing_rate;
  std::optional<double> qhat;
};

struct MetricsReport {
  std::string region;
  std::string uq_method;
  int n_channels = 0;
  int test_days = 0;
  SeedAggregate rmse;
  std::optional<UqStats> interval;   // seed means of (max, min, avg)
  std::optional<UqStats> epistemic;  // seed means of (max, min, avg)
  std::optional<double> coverage;
  std::optional<double> crossing_rate;
  std::vector<SeedMetrics> seeds;

  /// Averages the per-seed rows into the aggregate fields.
  void aggregate();
  /// key=value lines, a blank line, then a per-seed CSV table.
  std::string to_text() const;
};

void write_report(const MetricsReport& report, const std::filesystem::path& path);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace griduq
