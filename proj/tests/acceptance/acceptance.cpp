// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Training uses a reduced U-Net (width 8, depth 2) so the whole
// run fits in minutes on one core.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "griduq/checkpoint.hpp"
#include "griduq/data.hpp"
#include "griduq/errors.hpp"
#include "griduq/eval.hpp"
#include "griduq/losses.hpp"
#include "griduq/model.hpp"
#include "griduq/pipeline.hpp"
#include "griduq/random.hpp"
#include "griduq/train.hpp"
#include "griduq/uq.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace griduq;
using griduq::testing::read_bytes;
using griduq::testing::run_cli;
using griduq::testing::TempDir;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  fmt::print("[{}] C{} {}\n", ok ? "PASS" : "FAIL", id, detail);
  std::fflush(stdout);
  if (!ok) ++failures;
}

/// Runs `body`, turning an escaped exception into a FAIL line.
void criterion(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, fmt::format("threw: {}", e.what()));
  }
}

std::string sh(const fs::path& p) { return "'" + p.string() + "'"; }

void cli(const std::string& args) {
  if (run_cli(args) != 0) throw IoError("griduq " + args + " failed");
}

std::vector<GridSample> standardized_copy(std::span<const GridSample> raw, const ChannelStats& stats) {
  std::vector<GridSample> out(raw.begin(), raw.end());
  for (auto& s : out) standardize(s, stats);
  return out;
}

/// Mean of masked pixel values on the west and east halves.
std::pair<double, double> half_means(std::span<const Grid> grids, std::span<const GridSample> samples) {
  double sum[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (std::size_t d = 0; d < grids.size(); ++d) {
    const Grid& g = grids[d];
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) {
        if (!samples[d].mask.at(r, c)) continue;
        const int h = in_east_half(c, g.cols) ? 1 : 0;
        sum[h] += g.at(r, c);
        ++n[h];
      }
  }
  return {sum[0] / static_cast<double>(n[0]), sum[1] / static_cast<double>(n[1])};
}

/// Same, over every pixel of every grid.
std::pair<double, double> half_means_full(std::span<const Grid> grids) {
  double sum[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (const Grid& g : grids)
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) {
        const int h = in_east_half(c, g.cols) ? 1 : 0;
        sum[h] += g.at(r, c);
        ++n[h];
      }
  return {sum[0] / static_cast<double>(n[0]), sum[1] / static_cast<double>(n[1])};
}

std::vector<Mask> masks_of(std::span<const GridSample> samples) {
  std::vector<Mask> out;
  for (const auto& s : samples) out.push_back(s.mask);
  return out;
}

double east_share_of_top_decile(const StationRank& rank, int cols) {
  const std::size_t k = (rank.entries.size() + 9) / 10;
  std::size_t east = 0;
  for (std::size_t i = 0; i < k; ++i) east += in_east_half(rank.entries[i].col, cols) ? 1 : 0;
  return static_cast<double>(east) / static_cast<double>(k);
}

bool same_ranking(const StationRank& a, const StationRank& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto &x = a.entries[i], &y = b.entries[i];
    if (x.row != y.row || x.col != y.col || x.score != y.score) return false;
  }
  return true;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_bytes(e.path());
  return out;
}

// ---------------------------------------------------------------------------

struct Pipeline {
  fs::path data, runs_cqr, runs_mcd, report_cqr;
};

/// gen -> train cqr -> eval, and gen -> train mcd on the same data.
Pipeline run_pipeline(const TempDir& dir) {
  Pipeline p{dir / "data", dir / "runs_cqr", dir / "runs_mcd", dir / "cqr_report.txt"};
  cli(fmt::format("gen --region na --days 450 --channels 28 --noise hetero --density 0.05 --seed 0 --out {}",
                  sh(p.data)));
  cli(fmt::format("train --data {} --uq cqr --epochs 50 --seeds 0 --base-width 8 --depth 2 --out {}", sh(p.data),
                  sh(p.runs_cqr)));
  cli(fmt::format("eval --data {} --runs {} --out {}", sh(p.data), sh(p.runs_cqr), sh(p.report_cqr)));
  cli(fmt::format("train --data {} --uq mcd --epochs 30 --seeds 0 --base-width 8 --depth 2 --out {}", sh(p.data),
                  sh(p.runs_mcd)));
  return p;
}

void c1_coverage(const Dataset& data, const RunSet& runs) {
  const DataSplit parts = split_holdout(data);
  const TrainConfig& tc = runs.config.train;
  const TrainedModel& model = runs.models.at(0).model;
  const SplitIndices used = split(parts.pool.size(), tc.train_fraction, true, derive_seed(runs.models[0].seed, 0x51));

  // Exchangeable pool: the calibration days the model never trained on,
  // plus the held-out month.
  std::vector<GridSample> pool;
  for (auto i : used.calibration) pool.push_back(parts.pool[i]);
  pool.insert(pool.end(), parts.test.begin(), parts.test.end());
  const std::size_t n_cal = used.calibration.size();

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(20250601);
  std::vector<double> coverages;
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<GridSample> cal, test;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_cal ? cal : test).push_back(pool[order[i]]);
    TrainedModel m = model;
    m.qhat = cqr_calibrate(m.params, standardized_copy(cal, m.stats), tc.alpha);
    std::vector<CqrPrediction> preds;
    for (const auto& s : test) preds.push_back(predict_cqr(m, s, tc.alpha));
    coverages.push_back(empirical_coverage(preds, test));
  }
  const double mean = std::accumulate(coverages.begin(), coverages.end(), 0.0) / coverages.size();
  const auto [lo, hi] = std::minmax_element(coverages.begin(), coverages.end());
  report(1, mean >= 0.88 && mean <= 0.93,
         fmt::format("CQR coverage mean {:.4f} over 10 resamplings (min {:.4f}, max {:.4f}; {} cal / {} test days, "
                     "{} epochs)",
                     mean, *lo, *hi, n_cal, pool.size() - n_cal, tc.epochs));
}

void c2_gradients() {
  constexpr int kSeeds = 20;
  double worst = 0.0;
  std::string worst_case;
  int checks = 0;
  const auto& ops = griduq::testing::all_gradient_checks();
  for (const auto& op : ops)
    for (int s = 0; s < kSeeds; ++s) {
      const auto r = op.run(static_cast<std::uint64_t>(s));
      ++checks;
      if (!(r.rel_error <= worst)) {
        worst = r.rel_error;
        worst_case = r.case_name;
      }
    }
  report(2, worst < griduq::testing::kGradTolerance,
         fmt::format("finite differences: {} ops x {} seeds, max rel error {:.3e} ({})", ops.size(), kSeeds, worst,
                     worst_case));
}

void c3_overfit() {
  SyntheticOptions o;
  o.region = RegionSpec::north_america();
  o.n_days = 4;
  o.noise = NoiseProfile::parse("homo:0");
  o.station_density = 0.05;
  o.seed = 3;
  const Dataset d = generate_synthetic(o);
  std::vector<std::size_t> all{0, 1, 2, 3};
  const auto train = standardized(d.samples, all, compute_channel_stats(d.samples, all));
  TrainConfig c;
  c.method = UqMethod::Mcd;
  c.epochs = 300;
  c.batch_size = 4;
  c.base_width = 16;
  c.depth = 2;
  auto params = build(c.model_config(28), 3);
  fit(c, params, train, {}, 3);
  const double rmse = evaluate_rmse(params, train);
  report(3, rmse < 1.0, fmt::format("MCD overfit on 4 noiseless 31x49 days: masked train RMSE {:.4f} ppb after {} epochs",
                                    rmse, c.epochs));
}

void c4_variance_split(const Dataset& data, const RunSet& runs) {
  const DataSplit parts = split_holdout(data);
  const TrainedModel& model = runs.models.at(0).model;
  ModelConfig off = model.params.config();
  off.dropout_rate = 0.0f;
  const UNetParams no_dropout(off, model.params.tensors());

  std::size_t pixels = 0, zero_off = 0, positive_on = 0;
  for (std::size_t d = 0; d < 3; ++d) {
    GridSample s = parts.test[d];
    standardize(s, model.stats);
    Rng rng_off(derive_seed(7, d)), rng_on(derive_seed(8, d));
    const McdPrediction a = mc_dropout_predict(no_dropout, s.x, 30, rng_off);
    const McdPrediction b = mc_dropout_predict(model.params, s.x, 30, rng_on);
    for (std::size_t i = 0; i < a.epistemic.size(); ++i) {
      ++pixels;
      zero_off += a.epistemic.values[i] == 0.0f ? 1 : 0;
      positive_on += b.epistemic.values[i] > 0.0f ? 1 : 0;
    }
  }
  const double frac = static_cast<double>(positive_on) / static_cast<double>(pixels);
  report(4, zero_off == pixels && frac > 0.99,
         fmt::format("epistemic: rate 0 -> {}/{} pixels exactly 0; rate {:.2f}, T=30 -> {:.4f} of pixels > 0",
                     zero_off, pixels, model.params.config().dropout_rate, frac));
}

void c5_c11_alignment(const Dataset& data, const RunSet& cqr, const RunSet& mcd) {
  const DataSplit parts = split_holdout(data);
  const auto& test = parts.test;
  const int cols = data.region.cols;

  std::vector<Grid> interval, total;
  for (auto& p : ensemble_cqr(cqr, test)) interval.push_back(std::move(p.interval_length));
  for (auto& p : ensemble_mcd(mcd, test)) total.push_back(p.total_variance());

  const auto [iw, ie] = half_means(interval, test);
  const auto [vw, ve] = half_means(total, test);
  const auto [fiw, fie] = half_means_full(interval);
  const auto [fvw, fve] = half_means_full(total);

  const auto masks = masks_of(test);
  const Grid ci = cell_time_mean(interval, masks), cv = cell_time_mean(total, masks);
  std::vector<double> a(ci.values.begin(), ci.values.end()), b(cv.values.begin(), cv.values.end());
  const double rho = spearman(a, b);

  const double ri = ie / iw, rv = ve / vw;
  report(5, ri >= 1.5 && rv >= 1.5 && rho > 0.5,
         fmt::format("east/west: CQR interval {:.3f} ({:.2f} vs {:.2f} ppb), MCD total variance {:.3f} ({:.2f} vs "
                     "{:.2f} ppb^2), per-cell Spearman {:.3f}; full grid {:.3f} / {:.3f}",
                     ri, ie, iw, rv, ve, vw, rho, fie / fiw, fve / fvw));

  // Station ranking on the same construction. CQR ranks by the interval
  // length (the rank subcommand's score); MCD by total variance.
  const StationRank cqr_rank = run_rank(data, cqr);
  const StationRank cqr_again = run_rank(data, cqr);
  std::vector<Grid> mcd_point;
  for (auto& p : ensemble_mcd(mcd, test)) mcd_point.push_back(std::move(p.mean));
  const StationRank mcd_rank = rank_stations(total, mcd_point, test, data.region);
  const StationRank mcd_again = rank_stations(total, mcd_point, test, data.region);

  // Tie-breaking: equal scores keep (row, col) order.
  std::vector<Grid> flat(test.size(), Grid(data.region.rows, cols, Unit::Ppb, 1.0f));
  const StationRank tied = rank_stations(flat, flat, test, data.region);
  bool tie_order = !tied.entries.empty();
  for (std::size_t i = 1; i < tied.entries.size(); ++i) {
    const auto &p = tied.entries[i - 1], &q = tied.entries[i];
    tie_order = tie_order && std::pair(p.row, p.col) < std::pair(q.row, q.col);
  }

  const double se_cqr = east_share_of_top_decile(cqr_rank, cols);
  const double se_mcd = east_share_of_top_decile(mcd_rank, cols);
  const bool deterministic = same_ranking(cqr_rank, cqr_again) && same_ranking(mcd_rank, mcd_again);
  report(11, se_cqr >= 0.7 && se_mcd >= 0.7 && deterministic && tie_order,
         fmt::format("top-decile share in high-noise half: CQR {:.3f}, MCD {:.3f} of {} cells; repeat ranking {}; "
                     "tied scores {} by cell",
                     se_cqr, se_mcd, (cqr_rank.entries.size() + 9) / 10, deterministic ? "identical" : "DIFFERS",
                     tie_order ? "ordered" : "NOT ordered"));
}


void c6_losses() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(-80, 80);
  const Grid mu(31, 49, Unit::Ppb, 42.5f), one(31, 49, Unit::Ppb, 1.0f);
  const double nll = gaussian_nll(mu, one, mu, Mask(31, 49, true));
  bool nll_ok = std::abs(nll - 0.918939) <= 1e-5;

  bool half_mae = true;
  for (int trial = 0; trial < 20; ++trial) {
    Grid q(31, 49), y(31, 49);
    Mask m(31, 49);
    double mae = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      q.values[i] = u(rng);
      y.values[i] = u(rng);
      m.cells[i] = (rng() % 4) != 0;
      if (m.cells[i]) mae += std::abs(static_cast<double>(y.values[i]) - q.values[i]), ++n;
    }
    half_mae = half_mae && pinball(q, y, 0.5, m) == 0.5 * (mae / static_cast<double>(n));
  }
  const double plus = pinball_point(1.0, 0.05), minus = pinball_point(-1.0, 0.05);
  const bool examples = plus == 0.05 && minus == 0.95;
  report(6, nll_ok && half_mae && examples,
         fmt::format("NLL(y=mu, var=1) = {:.7f}; pinball(0.5) == MAE/2 on 20 random grids: {}; tau=0.05: u=+1 -> {}, "
                     "u=-1 -> {}",
                     nll, half_mae ? "exact" : "MISMATCH", plus, minus));
}

void c7_order_statistic() {
  std::vector<double> ten(10), ninety_nine(99);
  std::iota(ten.begin(), ten.end(), 1.0);
  std::iota(ninety_nine.begin(), ninety_nine.end(), 1.0);
  const double q10 = conformal_quantile(ten, 0.1), q99 = conformal_quantile(ninety_nine, 0.1);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 3.0);
  bool monotone = true;
  for (int set = 0; set < 5; ++set) {
    std::vector<double> scores(200 + 37 * set);
    for (auto& s : scores) s = g(rng);
    double prev = conformal_quantile(scores, 0.005);
    for (double alpha = 0.01; alpha < 0.999; alpha += 0.005) {
      const double q = conformal_quantile(scores, alpha);
      monotone = monotone && q <= prev;
      prev = q;
    }
  }
  report(7, q10 == 10.0 && q99 == 90.0 && monotone,
         fmt::format("qhat({{1..10}}, 0.1) = {}, qhat({{1..99}}, 0.1) = {}, nonincreasing in alpha: {}", q10, q99,
                     monotone ? "yes" : "NO"));
}

void c8_determinism(const TempDir& dir) {
  const fs::path data = dir / "det_data";
  cli(fmt::format("gen --region synth --rows 16 --cols 24 --days 60 --channels 28 --noise hetero --density 0.2 "
                  "--seed 5 --out {}",
                  sh(data)));
  auto one_run = [&](const std::string& tag) {
    const fs::path root = dir / tag;
    fs::create_directories(root);
    for (const char* uq : {"mcd", "cqr"}) {
      const fs::path runs = root / (std::string("runs_") + uq);
      cli(fmt::format("--deterministic train --data {} --uq {} --epochs 3 --seeds 0,1 --base-width 4 --depth 1 "
                      "--mc-passes 5 --out {}",
                      sh(data), uq, sh(runs)));
      fs::remove(runs / "runs.log");  // wall-clock timings
      cli(fmt::format("--deterministic eval --data {} --runs {} --out {}", sh(data), sh(runs),
                      sh(root / (std::string(uq) + "_report.txt"))));
      cli(fmt::format("--deterministic rank --data {} --runs {} --top 5 --out {}", sh(data), sh(runs),
                      sh(root / (std::string(uq) + "_rank.csv"))));
      cli(fmt::format("--deterministic extrapolate --data {} --runs {} --days 1,4 --out {}", sh(data), sh(runs),
                      sh(root / (std::string(uq) + "_maps"))));
    }
    return tree_bytes(root);
  };
  const auto a = one_run("det_a"), b = one_run("det_b");
  std::size_t csv = 0, ckpt = 0;
  for (const auto& [name, bytes] : a) {
    csv += name.ends_with(".csv") ? 1 : 0;
    ckpt += name.ends_with(".guqw") ? 1 : 0;
  }
  std::string first_diff;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      first_diff = name;
      break;
    }
  }
  const bool ok = a.size() == b.size() && first_diff.empty() && csv > 0 && ckpt > 0;
  report(8, ok,
         fmt::format("two --deterministic runs: {} files ({} checkpoints, {} CSVs, reports) {}", a.size(), ckpt, csv,
                     ok ? "byte-identical" : "differ at " + first_diff));
}

void c9_round_trips(const TempDir& dir) {
  SyntheticOptions o;
  o.region = RegionSpec::europe();
  o.n_days = 5;
  o.channels = 51;
  o.noise = NoiseProfile::parse("hetero");
  o.seed = 9;
  const Dataset d = generate_synthetic(o);
  write_dataset(dir / "rt_a", d);
  write_dataset(dir / "rt_b", read_dataset(dir / "rt_a"));
  const bool guqd = tree_bytes(dir / "rt_a") == tree_bytes(dir / "rt_b");

  TrainConfig c;
  c.base_width = 8;
  c.depth = 2;
  TrainedModel m{build(c.model_config(51), 9), compute_channel_stats(d.samples, std::vector<std::size_t>{0, 1, 2}),
                 0.731};
  save_checkpoint(dir / "a.guqw", checkpoint_tensors(m));
  save_checkpoint(dir / "b.guqw", load_checkpoint(dir / "a.guqw"));
  const bool guqw = read_bytes(dir / "a.guqw") == read_bytes(dir / "b.guqw");

  // A grid with awkward values: subnormal, negative zero, large, tiny.
  Grid g(d.region.rows, d.region.cols);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-500, 500);
  for (auto& v : g.values) v = u(rng);
  g.values[0] = 1e-40f;
  g.values[1] = -0.0f;
  g.values[2] = 3.4e38f;
  g.values[3] = 1.17549435e-38f;
  export_csv(g, d.region, dir / "grid.csv");
  const Grid back = read_grid_csv(dir / "grid.csv");
  bool csv = back.rows == g.rows && back.cols == g.cols;
  for (std::size_t i = 0; csv && i < g.size(); ++i)
    csv = std::bit_cast<std::uint32_t>(back.values[i]) == std::bit_cast<std::uint32_t>(g.values[i]);
  report(9, guqd && guqw && csv,
         fmt::format("GUQD rewrite {}, GUQW rewrite {}, CSV re-parse {}", guqd ? "identical" : "DIFFERS",
                     guqw ? "identical" : "DIFFERS", csv ? "exact" : "INEXACT"));
}

void c10_shapes() {
  bool ok = true;
  std::string detail;
  for (const RegionSpec& region : {RegionSpec::north_america(), RegionSpec::europe()})
    for (int channels : {28, 51})
      for (HeadKind head : {HeadKind::Gaussian, HeadKind::QuantileTriplet}) {
        TrainConfig c;  // full-width default architecture
        c.method = head == HeadKind::Gaussian ? UqMethod::Mcd : UqMethod::Cqr;
        const auto params = build(c.model_config(channels), 10);
        Rng rng(10);
        const Tensor y = forward(params, Tensor({1, channels, region.rows, region.cols}, 0.5f), false, rng);
        const Shape want{1, head == HeadKind::Gaussian ? 2 : 3, region.rows, region.cols};
        const bool match = y.shape() == want;
        ok = ok && match;
        detail += fmt::format("{}x{}x{}->{}{} ", channels, region.rows, region.cols, y.dim(1), match ? "" : "(!)");
      }
  report(10, ok, "forward shapes (in C x H x W -> out C): " + detail);
}

}  // namespace

int main() {
  criterion(6, c6_losses);
  criterion(7, c7_order_statistic);
  criterion(2, c2_gradients);
  criterion(10, c10_shapes);

  TempDir dir("acceptance");
  criterion(9, [&] { c9_round_trips(dir); });
  criterion(8, [&] { c8_determinism(dir); });
  criterion(3, c3_overfit);

  std::optional<Pipeline> p;
  try {
    p = run_pipeline(dir);
  } catch (const std::exception& e) {
    for (int id : {1, 4, 5, 11}) report(id, false, fmt::format("pipeline failed: {}", e.what()));
  }
  if (p) {
    const Dataset data = read_dataset(p->data);
    const RunSet cqr = load_runs(p->runs_cqr);
    const RunSet mcd = load_runs(p->runs_mcd);
    criterion(1, [&] { c1_coverage(data, cqr); });
    criterion(4, [&] { c4_variance_split(data, mcd); });
    criterion(5, [&] { c5_c11_alignment(data, cqr, mcd); });
  }

  fmt::print("{} criterion check(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
