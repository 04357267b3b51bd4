#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "griduq/errors.hpp"
#include "griduq/eval.hpp"
#include "griduq/metrics.hpp"

namespace {

using namespace griduq;
using griduq::testing::read_bytes;
using griduq::testing::TempDir;

Grid random_grid(int r, int c, std::uint64_t seed, float lo = -10, float hi = 10) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Grid g(r, c);
  for (auto& v : g.values) v = u(rng);
  return g;
}

Mask random_mask(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mask m(r, c);
  for (auto& b : m.cells) b = rng() % 3 == 0;
  m.cells[0] = 1;
  return m;
}

TEST(MaskedRmse, ClosedFormsAndOracle) {
  Grid y(1, 3), p(1, 3);
  y.values = {0, 0, 0};
  p.values = {3, 4, 100};
  Mask m(1, 3);
  m.cells = {1, 1, 0};
  EXPECT_NEAR(masked_rmse(p, y, m), std::sqrt(12.5), 1e-12);
  EXPECT_EQ(masked_rmse(y, y, Mask(1, 3, true)), 0.0);
  EXPECT_THROW(masked_rmse(p, y, Mask(1, 3, false)), ContractError);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Grid a = random_grid(7, 9, s), b = random_grid(7, 9, s + 100);
    const Mask mk = random_mask(7, 9, s);
    double sq = 0;
    int n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mk.cells[i]) sq += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]), ++n;
    EXPECT_NEAR(masked_rmse(a, b, mk), std::sqrt(sq / n), 1e-6);
  }
}

TEST(MaskedRmse, AccumulatorPoolsPixelsAcrossDays) {
  Grid y(1, 2), p1(1, 2), p2(1, 2);
  p1.values = {1, 1};
  p2.values = {3, 0};
  RmseAccumulator acc;
  acc.add(p1, y, Mask(1, 2, true));
  Mask one(1, 2);
  one.cells = {1, 0};
  acc.add(p2, y, one);
  EXPECT_EQ(acc.count(), 3u);
  EXPECT_NEAR(acc.rmse(), std::sqrt(11.0 / 3), 1e-12);
}

TEST(SeedAggregate, PopulationStatistics) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto a = aggregate_seeds(v);
  EXPECT_DOUBLE_EQ(a.mean, 2.5);
  EXPECT_DOUBLE_EQ(a.variance, 1.25);
  EXPECT_DOUBLE_EQ(a.stddev(), std::sqrt(1.25));
}

CqrPrediction cqr_with_length(const Grid& len) {
  CqrPrediction p;
  p.lo = Grid(len.rows, len.cols);
  p.mid = p.lo;
  p.hi = len;
  p.interval_length = len;
  return p;
}

TEST(IntervalStats, ConstantIntervals) {
  std::vector<CqrPrediction> preds(3, cqr_with_length(Grid(4, 5, Unit::Ppb, 40.0f)));
  std::vector<Mask> masks(3, random_mask(4, 5, 1));
  const auto s = interval_stats(preds, masks);
  EXPECT_EQ(s.max, 40.0);
  EXPECT_EQ(s.min, 40.0);
  EXPECT_EQ(s.avg, 40.0);
}

TEST(IntervalStats, MatchesScalarOracleAndIsPermutationInvariant) {
  const int days = 6, r = 5, c = 8;
  std::vector<CqrPrediction> preds;
  std::vector<Mask> masks;
  for (int d = 0; d < days; ++d) {
    preds.push_back(cqr_with_length(random_grid(r, c, d, 0, 50)));
    masks.push_back(random_mask(r, c, 77 + d));
  }
  // Oracle: per-cell time mean over masked days, then extremes/mean over
  // cells that were ever masked.
  double mx = -1e300, mn = 1e300, total = 0;
  int cells = 0;
  for (int i = 0; i < r * c; ++i) {
    double s = 0;
    int n = 0;
    for (int d = 0; d < days; ++d)
      if (masks[d].cells[i]) s += preds[d].interval_length.values[i], ++n;
    if (!n) continue;
    mx = std::max(mx, s / n), mn = std::min(mn, s / n), total += s / n, ++cells;
  }
  const auto st = interval_stats(preds, masks);
  EXPECT_NEAR(st.max, mx, 1e-4);
  EXPECT_NEAR(st.min, mn, 1e-4);
  EXPECT_NEAR(st.avg, total / cells, 1e-4);
  EXPECT_LE(st.min, st.avg);
  EXPECT_LE(st.avg, st.max);
  std::vector<std::size_t> order{5, 2, 0, 4, 1, 3};
  std::vector<CqrPrediction> p2;
  std::vector<Mask> m2;
  for (auto i : order) p2.push_back(preds[i]), m2.push_back(masks[i]);
  const auto st2 = interval_stats(p2, m2);
  EXPECT_NEAR(st2.max, st.max, 1e-5);
  EXPECT_NEAR(st2.min, st.min, 1e-5);
  EXPECT_NEAR(st2.avg, st.avg, 1e-5);
}

TEST(EpistemicStats, ZeroWhenPassesAgree) {
  McdPrediction p;
  p.mean = Grid(3, 3);
  p.epistemic = Grid(3, 3, Unit::PpbSquared, 0.0f);
  p.aleatoric = Grid(3, 3, Unit::PpbSquared, 1.0f);
  std::vector<McdPrediction> preds(2, p);
  std::vector<Mask> masks(2, Mask(3, 3, true));
  const auto s = epistemic_stats(preds, masks);
  EXPECT_EQ(s.max, 0.0);
  EXPECT_EQ(s.min, 0.0);
  EXPECT_EQ(s.avg, 0.0);
}

TEST(Coverage, ExtremeIntervals) {
  GridSample s;
  s.y = random_grid(4, 4, 3);
  s.mask = random_mask(4, 4, 4);
  CqrPrediction wide;
  wide.lo = Grid(4, 4, Unit::Ppb, -1e30f);
  wide.hi = Grid(4, 4, Unit::Ppb, 1e30f);
  const std::vector<GridSample> samples{s};
  EXPECT_EQ(empirical_coverage(std::vector<CqrPrediction>{wide}, samples), 1.0);
  CqrPrediction point;
  point.lo = Grid(4, 4, Unit::Ppb, 99.0f);
  point.hi = point.lo;
  EXPECT_EQ(empirical_coverage(std::vector<CqrPrediction>{point}, samples), 0.0);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 8, 16, 32}, c{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, c), -1.0, 1e-12);
  const std::vector<double> t1{1, 2, 2, 3}, t2{1, 3, 2, 4};
  EXPECT_NEAR(spearman(t1, t2), 4.5 / std::sqrt(22.5), 1e-12);
  const std::vector<double> nan_pair{1, std::nan(""), 3}, other{1, 0, 3};
  EXPECT_NEAR(spearman(nan_pair, other), 1.0, 1e-12);
}

std::vector<GridSample> masked_days(const Mask& m, int days) {
  std::vector<GridSample> out(static_cast<std::size_t>(days));
  for (auto& s : out) {
    s.y = Grid(m.rows, m.cols);
    s.mask = m;
  }
  return out;
}

TEST(RankStations, SingleCellIsBothEnds) {
  Mask m(3, 3);
  m.cells[4] = 1;
  const auto samples = masked_days(m, 2);
  const std::vector<Grid> uq{random_grid(3, 3, 1), random_grid(3, 3, 2)};
  const auto rank = rank_stations(uq, std::vector<Grid>(2, Grid(3, 3)), samples, RegionSpec::synthetic(3, 3));
  ASSERT_EQ(rank.entries.size(), 1u);
  EXPECT_EQ(rank.entries[0].row, 1);
  EXPECT_EQ(rank.entries[0].col, 1);
  EXPECT_NEAR(rank.entries[0].score, (uq[0].values[4] + uq[1].values[4]) / 2.0, 1e-6);
}

TEST(RankStations, DescendingWithRowColTieBreakAndOnlyMaskedCells) {
  Mask m(2, 3);
  m.cells = {1, 1, 0, 1, 1, 1};
  Grid uq(2, 3);
  uq.values = {5, 7, 100, 5, 7, 1};
  const auto rank = rank_stations(std::vector<Grid>{uq}, std::vector<Grid>{Grid(2, 3)}, masked_days(m, 1),
                                  RegionSpec::synthetic(2, 3));
  std::vector<std::pair<int, int>> order;
  for (const auto& e : rank.entries) order.emplace_back(e.row, e.col);
  EXPECT_EQ(order, (std::vector<std::pair<int, int>>{{0, 1}, {1, 1}, {0, 0}, {1, 0}, {1, 2}}));
}

TEST(RankStations, InvariantUnderMonotoneTransform) {
  const Mask m = random_mask(6, 7, 9);
  const auto samples = masked_days(m, 3);
  std::vector<Grid> uq{random_grid(6, 7, 1, 0, 5), random_grid(6, 7, 2, 0, 5), random_grid(6, 7, 3, 0, 5)};
  const std::vector<Grid> pred(3, Grid(6, 7));
  const auto spec = RegionSpec::synthetic(6, 7);
  const auto a = rank_stations(uq, pred, samples, spec);
  // A positive affine map commutes with the time mean, so ranks survive.
  for (auto& g : uq)
    for (auto& v : g.values) v = 3.0f * v + 2.0f;
  const auto b = rank_stations(uq, pred, samples, spec);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].row, b.entries[i].row);
    EXPECT_EQ(a.entries[i].col, b.entries[i].col);
  }
}

TEST(Heatmap, ConstantGridIsUniformMidColour) {
  TempDir dir("ppm");
  export_heatmap(Grid(3, 4, Unit::Ppb, 2.5f), dir / "c.ppm");
  const std::string b = read_bytes(dir / "c.ppm");
  const std::string header = "P6\n4 3\n255\n";
  ASSERT_EQ(b.size(), header.size() + 36);
  EXPECT_EQ(b.substr(0, header.size()), header);
  const Rgb mid = diverging_color(0.5);
  EXPECT_EQ(mid, (Rgb{255, 255, 255}));
  for (std::size_t i = header.size(); i < b.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(b[i]), 255);
}

TEST(Heatmap, ExtremesSentinelsAndRowOrder) {
  TempDir dir("ppm");
  Grid g(2, 2);
  g.values = {-1, 1, std::nanf(""), 0};
  export_heatmap(g, dir / "g.ppm", {}, 2);
  const std::string b = read_bytes(dir / "g.ppm");
  const std::size_t h = std::string("P6\n4 4\n255\n").size();
  auto px = [&](int x, int y) {
    const std::size_t o = h + (static_cast<std::size_t>(y) * 4 + x) * 3;
    return Rgb{static_cast<std::uint8_t>(b[o]), static_cast<std::uint8_t>(b[o + 1]), static_cast<std::uint8_t>(b[o + 2])};
  };
  EXPECT_EQ(px(0, 0), diverging_color(0.0));
  EXPECT_EQ(px(1, 1), diverging_color(0.0));
  EXPECT_EQ(px(2, 0), diverging_color(1.0));
  EXPECT_EQ(px(0, 2), kSentinelColor);
  EXPECT_EQ(px(3, 3), diverging_color(0.5));
  EXPECT_EQ(diverging_color(0.0), (Rgb{0, 0, 139}));
  EXPECT_EQ(diverging_color(1.0), (Rgb{139, 0, 0}));
  export_heatmap(g, dir / "f.ppm", ColorScale::fixed(-2, 2), 1);
  const std::string f = read_bytes(dir / "f.ppm");
  const std::size_t hf = std::string("P6\n2 2\n255\n").size();
  EXPECT_EQ(static_cast<unsigned char>(f[hf]), diverging_color(0.25).r);
}

TEST(Heatmap, UnwritablePathIsIoError) {
  EXPECT_THROW(export_heatmap(Grid(1, 1), "/nonexistent-dir/x.ppm"), IoError);
}

TEST(GridCsv, ReparsesToExactGrid) {
  TempDir dir("csv");
  Grid g = random_grid(5, 7, 12, -1e4f, 1e4f);
  g.values[3] = std::nanf("");
  g.values[4] = 1e-38f;
  g.values[5] = -0.0f;
  g.values[6] = 3.4e38f;
  export_csv(g, RegionSpec::synthetic(5, 7), dir / "g.csv");
  const Grid back = read_grid_csv(dir / "g.csv");
  ASSERT_EQ(back.rows, 5);
  ASSERT_EQ(back.cols, 7);
  EXPECT_EQ(std::memcmp(back.values.data(), g.values.data(), g.size() * sizeof(float)), 0);
  const std::string text = read_bytes(dir / "g.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "row,col,lat,lon,value");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 36);
}

TEST(GridCsv, MalformedFilesAreRejected) {
  TempDir dir("csv");
  write_text_file(dir / "a.csv", "row,col,lat,lon,value\n0,0,1,1,2\n0,0,1,1,3\n");
  EXPECT_THROW(read_grid_csv(dir / "a.csv"), FormatError);
  write_text_file(dir / "b.csv", "r,c\n");
  EXPECT_THROW(read_grid_csv(dir / "b.csv"), FormatError);
  write_text_file(dir / "c.csv", "row,col,lat,lon,value\n0,0,1,1,abc\n");
  EXPECT_THROW(read_grid_csv(dir / "c.csv"), FormatError);
}

TEST(Report, AggregatesAndRendersKeyValues) {
  MetricsReport r;
  r.region = "synth";
  r.uq_method = "cqr";
  r.n_channels = 28;
  r.test_days = 30;
  for (int s = 0; s < 2; ++s) {
    SeedMetrics m;
    m.seed = static_cast<std::uint64_t>(s);
    m.rmse = 4 + 2 * s;
    m.interval = UqStats{50.0 + s, 20.0, 30.0 + s};
    m.coverage = 0.9 + 0.01 * s;
    m.crossing_rate = 0.0;
    m.qhat = 1.0;
    r.seeds.push_back(m);
  }
  r.aggregate();
  EXPECT_DOUBLE_EQ(r.rmse.mean, 5.0);
  EXPECT_DOUBLE_EQ(r.rmse.variance, 1.0);
  ASSERT_TRUE(r.interval);
  EXPECT_DOUBLE_EQ(r.interval->max, 50.5);
  EXPECT_FALSE(r.epistemic);
  EXPECT_NEAR(*r.coverage, 0.905, 1e-12);
  const std::string t = r.to_text();
  for (const char* key : {"region=synth\n", "uq_method=cqr\n", "n_channels=28\n", "rmse_mean=5\n", "rmse_variance=1\n",
                          "rmse_std=1\n", "interval_max=50.5\n", "coverage=0.905\n", "\nseed,rmse,"}) {
    EXPECT_NE(t.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(t.find("epistemic_max="), std::string::npos);
}

}  // namespace
