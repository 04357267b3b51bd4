#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "griduq/data.hpp"
#include "griduq/metrics.hpp"
#include "griduq/model.hpp"

namespace griduq {

enum class UqMethod { Mcd, Cqr };

const char* uq_key(UqMethod m);
UqMethod parse_uq(const std::string& key);

struct TrainConfig {
  int epochs = 200;
  float lr = 1e-3f;
  float dropout_rate = 0.1f;
  int batch_size = 8;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  UqMethod method = UqMethod::Mcd;
  double alpha = 0.1;
  int mc_passes = 30;
  int base_width = 32;
  int depth = 3;
  double train_fraction = 0.9;
  double clip_norm = 5.0;
  /// Where checkpoints go; empty keeps everything in memory.
  std::filesystem::path output_dir;

  void validate() const;
  ModelConfig model_config(int in_channels) const;
};

struct RunRecord {
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  double final_val_loss = 0.0;
  /// Masked RMSE of the point prediction on the validation days, best weights.
  double val_rmse = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path final_checkpoint;
  std::optional<double> qhat;
  double wall_seconds = 0.0;
  std::vector<double> train_loss_history;
};

/// Weights plus everything inference needs.
struct TrainedModel {
  UNetParams params;
  ChannelStats stats;
  std::optional<double> qhat;
};

struct RunResult {
  RunRecord record;
  TrainedModel model;
};

struct FitResult {
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;    // per epoch; empty without validation days
  int best_epoch = 0;              // 1-based
  double best_val_loss = 0.0;
  UNetParams best;
};

/// Adam with a constant learning rate and global-norm clipping over
/// already-standardized samples. Epoch e shuffles with a stream derived
/// from (seed, e). Throws TrainingDiverged on a non-finite batch loss.
FitResult fit(const TrainConfig& config, UNetParams& params, std::span<const GridSample> train,
              std::span<const GridSample> validation, std::uint64_t seed);

/// Training objective over a batch of standardized samples: Gaussian NLL
/// for a Gaussian head, summed pinball losses for the quantile head.
Var batch_loss(Tape& tape, UNetParams& params, std::span<const GridSample* const> batch, bool dropout_active,
               Rng& rng);
/// Mean objective over samples (dropout off), weighted by station pixels.
double evaluate_loss(const UNetParams& params, std::span<const GridSample> samples, int batch_size);

/// Point prediction: Gaussian mean or the median head, dropout off.
Grid point_prediction(const UNetParams& params, const Tensor& x);
double evaluate_rmse(const UNetParams& params, std::span<const GridSample> samples);

/// One seed end to end on the development pool (raw inputs): split,
/// standardize on the training part, fit, keep the best-validation
/// weights, calibrate (CQR) and write checkpoints when output_dir is set.
RunResult train_one(const TrainConfig& config, std::span<const GridSample> pool, std::uint64_t seed);

struct MultiSeedResult {
  std::vector<RunResult> runs;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  SeedAggregate val_rmse;
  SeedAggregate best_val_loss;

  bool ok() const { return failures.empty(); }
};

/// Runs every configured seed; a failing seed is recorded and the rest
/// continue. Appends one line per successful run to output_dir/runs.log.
MultiSeedResult train_all_seeds(const TrainConfig& config, std::span<const GridSample> pool);

// Checkpoint contents: model tensors plus "stats.mean", "stats.std" and,
// for calibrated CQR models, "cqr.qhat".
std::vector<NamedTensor> checkpoint_tensors(const TrainedModel& model);
TrainedModel model_from_checkpoint(const ModelConfig& config, std::vector<NamedTensor> tensors);

std::string format_run_record(const RunRecord& r);

}  // namespace griduq
