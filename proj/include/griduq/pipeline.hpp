#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "griduq/data.hpp"
#include "griduq/eval.hpp"
#include "griduq/train.hpp"

namespace griduq {

/// What a runs directory records about its training invocation.
struct RunsConfig {
  TrainConfig train;
  std::string region;
  int in_channels = 0;
};

std::string format_runs_config(const RunsConfig& c);
RunsConfig parse_runs_config(const std::string& text);
void write_runs_config(const std::filesystem::path& dir, const RunsConfig& c);
RunsConfig read_runs_config(const std::filesystem::path& dir);

struct SeedModel {
  std::uint64_t seed = 0;
  TrainedModel model;
};

/// A runs directory loaded back: config plus the best checkpoint of each
/// seed that finished.
struct RunSet {
  RunsConfig config;
  std::vector<SeedModel> models;
};

RunSet load_runs(const std::filesystem::path& dir);

/// Held-out test month (raw inputs) and the development pool.
struct DataSplit {
  std::vector<GridSample> pool;
  std::vector<GridSample> test;
};

DataSplit split_holdout(const Dataset& dataset);

/// Standardizes one raw sample with the model's statistics and predicts.
CqrPrediction predict_cqr(const TrainedModel& model, const GridSample& raw, double alpha);
/// MC passes draw from a stream derived from (seed, sample date), so a day
/// gets the same maps whichever subset it is evaluated in.
McdPrediction predict_mcd(const TrainedModel& model, const GridSample& raw, int passes, std::uint64_t seed);

/// Seed-averaged predictions for each sample.
std::vector<CqrPrediction> ensemble_cqr(const RunSet& runs, std::span<const GridSample> samples);
std::vector<McdPrediction> ensemble_mcd(const RunSet& runs, std::span<const GridSample> samples);

/// Per-day point prediction and UQ score grid (interval length for CQR,
/// epistemic variance for MCD), seed-averaged.
struct UqSeries {
  std::vector<Grid> point;
  std::vector<Grid> score;
};
UqSeries ensemble_scores(const RunSet& runs, std::span<const GridSample> samples);

// ---------------------------------------------------------------------------
// Subcommand bodies

struct GenRequest {
  std::string region = "synth";
  int days = 450;
  int channels = 28;
  std::string noise = "hetero";
  double density = 0.05;
  std::uint64_t seed = 0;
  int rows = 31;  // synthetic region only
  int cols = 49;
  std::filesystem::path out;
};
Dataset run_gen(const GenRequest& req);

/// Trains every seed on the development pool and writes the runs directory.
MultiSeedResult run_train(const Dataset& dataset, const TrainConfig& config);

MetricsReport run_eval(const Dataset& dataset, const RunSet& runs);
void write_eval_outputs(const MetricsReport& report, const std::filesystem::path& out);

StationRank run_rank(const Dataset& dataset, const RunSet& runs);
/// Top and bottom K entries as CSV.
std::string format_ranks(const StationRank& rank, int top, const std::string& method);

struct SeriesRow {
  Date date{};
  float y = 0.0f;  // NaN when the cell has no station that day
  float mid = 0.0f;
  float lo = 0.0f;
  float hi = 0.0f;
};
std::vector<SeriesRow> run_series(const Dataset& dataset, const RunSet& runs, double lat, double lon);
std::string format_series(std::span<const SeriesRow> rows);

/// Writes <date>_<map>.ppm and .csv for each requested 1-based test day.
std::vector<std::filesystem::path> run_extrapolate(const Dataset& dataset, const RunSet& runs,
                                                   std::span<const int> days, const std::filesystem::path& out);

}  // namespace griduq
