#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "griduq/grid.hpp"
#include "griduq/tensor.hpp"

namespace griduq {

using Date = std::chrono::year_month_day;

std::string format_date(Date d);
/// Parses YYYY-MM-DD; throws FormatError otherwise.
Date parse_date(const std::string& text);

enum class Region { NorthAmerica, Europe, Synthetic };

/// Grid extent and geo-transform. (lat0, lon0) is the north-west corner;
/// row 0 is the northmost row.
struct RegionSpec {
  Region region = Region::Synthetic;
  int rows = 0;
  int cols = 0;
  double lat0 = 0.0;
  double lon0 = 0.0;
  double cell_size = 1.0;  // degrees

  static RegionSpec north_america();
  static RegionSpec europe();
  static RegionSpec synthetic(int rows, int cols);

  struct Cell {
    int row;
    int col;
    friend bool operator==(const Cell&, const Cell&) = default;
  };

  double cell_lat(int row) const { return lat0 - (row + 0.5) * cell_size; }
  double cell_lon(int col) const { return lon0 + (col + 0.5) * cell_size; }
  /// Cell containing (lat, lon); throws ContractError outside the extent.
  Cell cell_of(double lat, double lon) const;

  friend bool operator==(const RegionSpec&, const RegionSpec&) = default;
};

const char* region_key(Region r);
Region parse_region(const std::string& key);

/// One day: standardized or raw inputs [C,H,W], bias target (NaN where no
/// station), and the station mask.
struct GridSample {
  Date date;
  Tensor x;
  Grid y;
  Mask mask;
};

struct Dataset {
  RegionSpec region;
  std::vector<std::string> channel_names;
  std::vector<GridSample> samples;
  /// Extra manifest keys (generator parameters and the like).
  std::map<std::string, std::string> attributes;

  int channels() const { return static_cast<int>(channel_names.size()); }
};

inline constexpr char kDatasetMagic[4] = {'G', 'U', 'Q', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint32_t kTargetSentinelBits = 0x7FC00000u;

/// GUQD directory: manifest.txt plus one YYYY-MM-DD.guq file per day.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// Reads and validates a GUQD directory. Samples come back sorted by date.
/// Any malformed file aborts the whole load.
Dataset read_dataset(const std::filesystem::path& dir);

void write_sample(const std::filesystem::path& file, const GridSample& sample);
GridSample read_sample(const std::filesystem::path& file);

/// Day-granular partition into index sets.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;  // empty unless requested
  std::vector<std::size_t> validation;
};

/// Shuffles days with `seed`, keeps round(train_frac * n) for training and
/// the rest for validation. With calib, the training part is halved: the
/// first half trains, the second half calibrates.
SplitIndices split(std::size_t n_samples, double train_frac, bool calib, std::uint64_t seed);

/// Days of the latest year are the held-out test month; everything before
/// is the development pool.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_latest_year(
    std::span<const GridSample> samples);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
  /// Channels with zero spread; they get mean 0, std 1 and pass through.
  std::vector<int> degenerate;
};

ChannelStats compute_channel_stats(std::span<const GridSample> samples, std::span<const std::size_t> indices);
/// x <- (x - mean) / std per channel; targets untouched.
void standardize(GridSample& sample, const ChannelStats& stats);
std::vector<GridSample> standardized(std::span<const GridSample> samples, std::span<const std::size_t> indices,
                                     const ChannelStats& stats);

// ---------------------------------------------------------------------------
// Synthetic generator

enum class NoiseKind { Homoscedastic, Heteroscedastic };

/// Homoscedastic: sigma everywhere. Heteroscedastic: sigma on the western
/// half of the grid, 2*sigma on the eastern half.
struct NoiseProfile {
  NoiseKind kind = NoiseKind::Homoscedastic;
  double sigma = 0.0;

  double sigma_at(int col, int cols) const;
  std::string to_string() const;
  /// "homo:SIGMA", "hetero" or "hetero:SIGMA".
  static NoiseProfile parse(const std::string& text);
};

inline constexpr double kDefaultHeteroSigma = 3.0;

/// True for columns on the high-noise (eastern) half.
inline bool in_east_half(int col, int cols) { return 2 * col >= cols; }

struct SyntheticOptions {
  RegionSpec region = RegionSpec::synthetic(32, 32);
  int n_days = 30;
  int channels = 28;
  NoiseProfile noise;
  double station_density = 0.05;
  std::uint64_t seed = 0;
  int start_year = 2005;
};

/// Closed-form generator parameters: lets tests recompute the noiseless
/// target from raw (unstandardized) inputs.
class SyntheticTruth {
 public:
  explicit SyntheticTruth(const SyntheticOptions& options);

  /// Raw inputs [C,H,W] of day `day` (0-based).
  Tensor day_inputs(int day) const;
  /// Noise-free bias for raw inputs x [C,H,W].
  Grid noiseless_target(const Tensor& x) const;
  static double target_from_drivers(double z0, double z1, double z2);
  /// Fixed station pattern: exactly round(density * H * W) cells (at least
  /// one), drawn around random cluster centres.
  const Mask& station_mask() const { return mask_; }

  const SyntheticOptions& options() const { return options_; }
  static constexpr int kDriverChannels[3] = {2, 3, 4};

 private:
  struct Wave {
    double amplitude;
    double fx;
    double fy;
  };

  SyntheticOptions options_;
  std::vector<double> offset_;
  std::vector<double> scale_;
  std::vector<std::vector<float>> climatology_;  // per channel, H*W
  std::vector<std::vector<Wave>> waves_;         // per dynamic channel
  int dynamic_channels_ = 0;
  Mask mask_;
};

/// Smooth random input fields, a known nonlinear target of three channels
/// plus noise, and a clustered time-invariant station mask.
Dataset generate_synthetic(const SyntheticOptions& options);

/// Daily (date, y) at the cell nearest to (lat, lon), only on days the cell
/// has a station. Unmasked cells give an empty series and a warning.
std::vector<std::pair<Date, float>> station_series(const Dataset& dataset, double lat, double lon);

}  // namespace griduq
