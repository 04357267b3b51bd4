#include "griduq/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "griduq/errors.hpp"
#include "griduq/log.hpp"
#include "griduq/losses.hpp"
#include "griduq/optim.hpp"
#include "griduq/random.hpp"
#include "griduq/uq.hpp"

namespace griduq {

const char* uq_key(UqMethod m) { return m == UqMethod::Mcd ? "mcd" : "cqr"; }

UqMethod parse_uq(const std::string& key) {
  if (key == "mcd") return UqMethod::Mcd;
  if (key == "cqr") return UqMethod::Cqr;
  throw FormatError("unknown UQ method '" + key + "' (expected mcd or cqr)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError(fmt::format("epochs must be >= 1, got {}", epochs));
  if (batch_size < 1) throw ContractError(fmt::format("batch size must be >= 1, got {}", batch_size));
  if (seeds.empty()) throw ContractError("at least one seed is required");
  if (!(lr > 0.0f)) throw ContractError("learning rate must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError(fmt::format("alpha {} outside (0,1)", alpha));
  if (mc_passes < 2) throw ContractError(fmt::format("MC passes must be >= 2, got {}", mc_passes));
  if (!(clip_norm > 0.0)) throw ContractError("clip norm must be positive");
}

ModelConfig TrainConfig::model_config(int in_channels) const {
  ModelConfig m;
  m.in_channels = in_channels;
  m.base_width = base_width;
  m.depth = depth;
  m.dropout_rate = dropout_rate;
  m.head = method == UqMethod::Mcd ? HeadKind::Gaussian : HeadKind::QuantileTriplet;
  // Central (1 - alpha) interval plus the median.
  m.quantiles = {static_cast<float>(alpha / 2), 0.5f, static_cast<float>(1.0 - alpha / 2)};
  m.validate();
  return m;
}

Var batch_loss(Tape& tape, UNetParams& params, std::span<const GridSample* const> batch, bool dropout_active,
               Rng& rng) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  const Tensor& first = batch[0]->x;
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int n = static_cast<int>(batch.size());
  Tensor x({n, c, h, w});
  std::vector<float> y(static_cast<std::size_t>(n) * plane);
  std::vector<std::uint8_t> mask(y.size());
  for (int i = 0; i < n; ++i) {
    const GridSample& s = *batch[i];
    if (s.x.shape() != first.shape()) throw DimensionError("batch_loss: samples differ in shape");
    std::copy(s.x.data().begin(), s.x.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * c * plane));
    std::copy(s.y.values.begin(), s.y.values.end(), y.begin() + static_cast<std::ptrdiff_t>(i * plane));
    std::copy(s.mask.cells.begin(), s.mask.cells.end(), mask.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  Var in = tape.constant(std::move(x));
  Var raw = forward(tape, params, in, dropout_active, rng);
  if (params.config().head == HeadKind::Gaussian) {
    auto g = gaussian_head(tape, raw);
    return gaussian_nll(tape, g.mu, g.sigma2, y, mask);
  }
  Var total;
  for (int k = 0; k < 3; ++k) {
    Var term = pinball(tape, tape.slice_channels(raw, k, 1), y, params.config().quantiles[k], mask);
    total = total.valid() ? tape.add(total, term) : term;
  }
  return total;
}

double evaluate_loss(const UNetParams& params, std::span<const GridSample> samples, int batch_size) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  // batch_loss takes mutable params for training; evaluation never writes
  // because the tape records no gradients.
  auto& p = const_cast<UNetParams&>(params);
  Rng unused(0);
  double weighted = 0.0;
  std::size_t pixels = 0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const GridSample*> batch;
    std::size_t count = 0;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&samples[i]);
      count += samples[i].mask.count();
    }
    Tape tape(false);
    const double loss = tape.value(batch_loss(tape, p, batch, false, unused)).item();
    weighted += loss * static_cast<double>(count);
    pixels += count;
  }
  return weighted / static_cast<double>(pixels);
}

Grid point_prediction(const UNetParams& params, const Tensor& x) {
  Rng unused(0);
  const Tensor out = forward(params, x, false, unused);
  return grid_from_channel(out, 0, params.config().head == HeadKind::Gaussian ? 0 : 1, Unit::Ppb);
}

double evaluate_rmse(const UNetParams& params, std::span<const GridSample> samples) {
  RmseAccumulator acc;
  for (const auto& s : samples) acc.add(point_prediction(params, s.x), s.y, s.mask);
  return acc.rmse();
}

FitResult fit(const TrainConfig& config, UNetParams& params, std::span<const GridSample> train,
              std::span<const GridSample> validation, std::uint64_t seed) {
  config.validate();
  if (train.empty()) throw ContractError("fit: no training samples");
  FitResult out;
  out.best_val_loss = std::numeric_limits<double>::infinity();
  AdamState adam;
  AdamOptions opts;
  opts.lr = config.lr;
  auto tensors = params.pointers();
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, 0x1000ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng(derive_seed(seed, 0x2000000ULL + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const GridSample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      params.zero_grad();
      Tape tape;
      Var loss = batch_loss(tape, params, batch, true, dropout_rng);
      const double value = tape.value(loss).item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged(epoch, batches + 1,
                               fmt::format("non-finite training loss at epoch {}, batch {}", epoch, batches + 1));
      }
      tape.backward(loss);
      clip_grad_norm(tensors, config.clip_norm);
      adam_step(tensors, adam, opts);
      loss_sum += value;
      ++batches;
    }
    out.train_loss.push_back(loss_sum / batches);
    if (!validation.empty()) {
      const double v = evaluate_loss(params, validation, config.batch_size);
      out.val_loss.push_back(v);
      if (v < out.best_val_loss) {
        out.best_val_loss = v;
        out.best_epoch = epoch;
        out.best = params;
      }
    }
  }
  if (validation.empty()) {
    out.best = params;
    out.best_epoch = config.epochs;
    out.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  for (auto& nt : out.best.tensors()) nt.tensor.clear_grad();
  return out;
}

std::vector<NamedTensor> checkpoint_tensors(const TrainedModel& model) {
  std::vector<NamedTensor> out = model.params.tensors();
  for (auto& nt : out) nt.tensor.clear_grad();
  const auto c = static_cast<int>(model.stats.mean.size());
  std::vector<float> mean(model.stats.mean.begin(), model.stats.mean.end());
  std::vector<float> sd(model.stats.std.begin(), model.stats.std.end());
  out.push_back({"stats.mean", Tensor({c}, std::move(mean))});
  out.push_back({"stats.std", Tensor({c}, std::move(sd))});
  if (model.qhat) out.push_back({"cqr.qhat", Tensor::scalar(static_cast<float>(*model.qhat))});
  return out;
}

TrainedModel model_from_checkpoint(const ModelConfig& config, std::vector<NamedTensor> tensors) {
  TrainedModel m;
  std::vector<NamedTensor> weights;
  for (auto& nt : tensors) {
    if (nt.name == "stats.mean") {
      m.stats.mean.assign(nt.tensor.data().begin(), nt.tensor.data().end());
    } else if (nt.name == "stats.std") {
      m.stats.std.assign(nt.tensor.data().begin(), nt.tensor.data().end());
    } else if (nt.name == "cqr.qhat") {
      m.qhat = nt.tensor.item();
    } else {
      weights.push_back(std::move(nt));
    }
  }
  if (m.stats.mean.empty() || m.stats.mean.size() != m.stats.std.size()) {
    throw FormatError("checkpoint lacks channel statistics");
  }
  m.params = params_from_checkpoint(config, std::move(weights));
  return m;
}

namespace {

std::vector<GridSample> gather(std::span<const GridSample> pool, std::span<const std::size_t> idx,
                               const ChannelStats& stats) {
  return standardized(pool, idx, stats);
}

}  // namespace

RunResult train_one(const TrainConfig& config, std::span<const GridSample> pool, std::uint64_t seed) {
  config.validate();
  if (pool.empty()) throw ContractError("train: empty dataset");
  const auto started = std::chrono::steady_clock::now();
  const int channels = pool[0].x.dim(0);
  const ModelConfig mc = config.model_config(channels);
  const bool cqr = config.method == UqMethod::Cqr;
  const SplitIndices parts = split(pool.size(), config.train_fraction, cqr, derive_seed(seed, 0x51));

  RunResult result;
  TrainedModel& model = result.model;
  model.stats = compute_channel_stats(pool, parts.train);
  const auto train = gather(pool, parts.train, model.stats);
  const auto val = gather(pool, parts.validation, model.stats);

  UNetParams params = build(mc, derive_seed(seed, 0xB1));
  FitResult fitted = fit(config, params, train, val, seed);

  RunRecord& r = result.record;
  r.seed = seed;
  r.train_loss_history = fitted.train_loss;
  r.final_train_loss = fitted.train_loss.back();
  r.best_val_loss = fitted.best_val_loss;
  r.best_epoch = fitted.best_epoch;
  r.final_val_loss = fitted.val_loss.empty() ? fitted.best_val_loss : fitted.val_loss.back();
  model.params = std::move(fitted.best);
  r.val_rmse = evaluate_rmse(model.params, val);
  if (cqr) {
    const auto calib = gather(pool, parts.calibration, model.stats);
    model.qhat = cqr_calibrate(model.params, calib, config.alpha);
    r.qhat = model.qhat;
  }
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    r.checkpoint = config.output_dir / fmt::format("seed{}_best.guqw", seed);
    r.final_checkpoint = config.output_dir / fmt::format("seed{}_final.guqw", seed);
    save_checkpoint(r.checkpoint, checkpoint_tensors(model));
    save_checkpoint(r.final_checkpoint, checkpoint_tensors(TrainedModel{params, model.stats, std::nullopt}));
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::string format_run_record(const RunRecord& r) {
  std::string line = fmt::format(
      "seed={} final_train_loss={:.9g} best_val_loss={:.9g} best_epoch={} final_val_loss={:.9g} val_rmse={:.9g}",
      r.seed, r.final_train_loss, r.best_val_loss, r.best_epoch, r.final_val_loss, r.val_rmse);
  if (r.qhat) line += fmt::format(" qhat={:.9g}", *r.qhat);
  if (!r.checkpoint.empty()) line += fmt::format(" checkpoint={}", r.checkpoint.filename().string());
  if (!r.final_checkpoint.empty()) line += fmt::format(" final_checkpoint={}", r.final_checkpoint.filename().string());
  line += fmt::format(" wall_seconds={:.3f}", r.wall_seconds);
  return line;
}

MultiSeedResult train_all_seeds(const TrainConfig& config, std::span<const GridSample> pool) {
  config.validate();
  MultiSeedResult out;
  for (std::uint64_t seed : config.seeds) {
    try {
      out.runs.push_back(train_one(config, pool, seed));
      info(fmt::format("seed {} done: {}", seed, format_run_record(out.runs.back().record)));
      if (!config.output_dir.empty()) {
        std::ofstream log(config.output_dir / "runs.log", std::ios::app);
        log << format_run_record(out.runs.back().record) << '\n';
      }
    } catch (const std::exception& e) {
      warn(fmt::format("seed {} failed: {}", seed, e.what()));
      out.failures.emplace_back(seed, e.what());
    }
  }
  if (!out.runs.empty()) {
    std::vector<double> rmse, loss;
    for (const auto& r : out.runs) {
      rmse.push_back(r.record.val_rmse);
      loss.push_back(r.record.best_val_loss);
    }
    out.val_rmse = aggregate_seeds(rmse);
    out.best_val_loss = aggregate_seeds(loss);
  }
  return out;
}

}  // namespace griduq
