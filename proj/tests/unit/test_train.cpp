#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "griduq/checkpoint.hpp"
#include "griduq/errors.hpp"
#include "griduq/train.hpp"

namespace {

using namespace griduq;
using griduq::testing::read_bytes;
using griduq::testing::small_dataset;
using griduq::testing::TempDir;

TrainConfig quick_config(UqMethod method, int epochs) {
  TrainConfig c;
  c.method = method;
  c.epochs = epochs;
  c.base_width = 4;
  c.depth = 1;
  c.batch_size = 4;
  c.seeds = {0};
  c.mc_passes = 4;
  return c;
}

std::vector<GridSample> standardized_all(const Dataset& d) {
  std::vector<std::size_t> idx(d.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return standardized(d.samples, idx, compute_channel_stats(d.samples, idx));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_EQ(parse_uq("cqr"), UqMethod::Cqr);
  EXPECT_THROW(parse_uq("bayes"), FormatError);
}

TEST(TrainConfig, QuantileLevelsFollowAlpha) {
  TrainConfig c;
  c.method = UqMethod::Cqr;
  c.alpha = 0.1;
  const auto m = c.model_config(28);
  EXPECT_EQ(m.head, HeadKind::QuantileTriplet);
  EXPECT_FLOAT_EQ(m.quantiles[0], 0.05f);
  EXPECT_FLOAT_EQ(m.quantiles[1], 0.5f);
  EXPECT_FLOAT_EQ(m.quantiles[2], 0.95f);
  c.method = UqMethod::Mcd;
  EXPECT_EQ(c.model_config(51).head_channels(), 2);
}

TEST(Fit, OverfitsFourNoiselessDays) {
  const Dataset d = small_dataset(16, 24, 4, "homo:0", 0.1, 1);
  const auto train = standardized_all(d);
  TrainConfig c = quick_config(UqMethod::Mcd, 300);
  c.base_width = 8;
  c.depth = 2;
  auto params = build(c.model_config(28), 1);
  const double before = evaluate_rmse(params, train);
  fit(c, params, train, {}, 1);
  const double after = evaluate_rmse(params, train);
  EXPECT_LT(after, 1.0) << "started at " << before;
}

TEST(Fit, IsDeterministicForFixedSeed) {
  const Dataset d = small_dataset(8, 8, 12, "hetero", 0.3, 2);
  const auto train = standardized_all(d);
  const TrainConfig c = quick_config(UqMethod::Mcd, 3);
  auto a = build(c.model_config(28), 4), b = build(c.model_config(28), 4);
  const auto fa = fit(c, a, train, train, 9);
  const auto fb = fit(c, b, train, train, 9);
  EXPECT_EQ(fa.train_loss, fb.train_loss);
  EXPECT_EQ(fa.val_loss, fb.val_loss);
  for (std::size_t i = 0; i < a.tensors().size(); ++i) EXPECT_EQ(a.tensors()[i].tensor, b.tensors()[i].tensor);
}

TEST(Fit, BestEpochTracksLowestValidationLoss) {
  const Dataset d = small_dataset(8, 8, 12, "hetero", 0.3, 2);
  const auto train = standardized_all(d);
  const TrainConfig c = quick_config(UqMethod::Cqr, 6);
  auto p = build(c.model_config(28), 0);
  const auto f = fit(c, p, train, train, 0);
  ASSERT_EQ(f.val_loss.size(), 6u);
  const auto best = std::min_element(f.val_loss.begin(), f.val_loss.end());
  EXPECT_EQ(f.best_epoch, 1 + static_cast<int>(best - f.val_loss.begin()));
  EXPECT_DOUBLE_EQ(f.best_val_loss, *best);
  EXPECT_NEAR(evaluate_loss(f.best, train, 4), *best, 1e-9 * (1 + std::abs(*best)));
}

TEST(Fit, NonFiniteLossRaisesTrainingDiverged) {
  Dataset d = small_dataset(8, 8, 8, "hetero", 0.3, 2);
  auto train = standardized_all(d);
  train[5].x[3] = std::numeric_limits<float>::quiet_NaN();
  const TrainConfig c = quick_config(UqMethod::Mcd, 2);
  auto p = build(c.model_config(28), 0);
  try {
    fit(c, p, train, {}, 0);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_GE(e.batch(), 1);
  }
}

TEST(TrainOne, CqrRunCalibratesAndWritesCheckpoints) {
  TempDir dir("train");
  const Dataset d = small_dataset(10, 12, 40, "hetero", 0.3, 3);
  TrainConfig c = quick_config(UqMethod::Cqr, 2);
  c.output_dir = dir.path();
  const RunResult r = train_one(c, d.samples, 7);
  ASSERT_TRUE(r.model.qhat);
  EXPECT_TRUE(std::isfinite(*r.model.qhat));
  EXPECT_GE(r.record.best_epoch, 1);
  ASSERT_TRUE(std::filesystem::exists(dir / "seed7_best.guqw"));
  ASSERT_TRUE(std::filesystem::exists(dir / "seed7_final.guqw"));
  const TrainedModel back = model_from_checkpoint(c.model_config(28), load_checkpoint(dir / "seed7_best.guqw"));
  EXPECT_EQ(back.qhat, static_cast<double>(static_cast<float>(*r.model.qhat)));
  EXPECT_EQ(back.stats.mean.size(), 28u);
  for (std::size_t i = 0; i < back.params.tensors().size(); ++i) {
    EXPECT_EQ(back.params.tensors()[i].tensor, r.model.params.tensors()[i].tensor);
  }
}

TEST(TrainOne, CalibrationNeedsEnoughStationPixels) {
  const Dataset d = small_dataset(4, 4, 12, "hetero", 0.07, 3);  // one station cell
  const TrainConfig c = quick_config(UqMethod::Cqr, 1);
  EXPECT_THROW(train_one(c, d.samples, 0), CalibrationError);
}

TEST(TrainAllSeeds, RecordsFailuresAndKeepsGoing) {
  TempDir dir("train");
  const Dataset d = small_dataset(8, 8, 20, "hetero", 0.3, 3);
  TrainConfig c = quick_config(UqMethod::Mcd, 1);
  c.seeds = {1, 2};
  c.output_dir = dir.path();
  const auto ok = train_all_seeds(c, d.samples);
  EXPECT_TRUE(ok.ok());
  EXPECT_EQ(ok.runs.size(), 2u);
  const std::string log = read_bytes(dir / "runs.log");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  EXPECT_EQ(log.rfind("seed=1 ", 0), 0u);

  Dataset bad = d;
  bad.samples[0].x[0] = std::numeric_limits<float>::infinity();
  c.output_dir.clear();
  const auto failed = train_all_seeds(c, bad.samples);
  EXPECT_FALSE(failed.ok());
  EXPECT_EQ(failed.failures.size() + failed.runs.size(), 2u);
}

}  // namespace
