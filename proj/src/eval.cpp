#include "griduq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "griduq/errors.hpp"

namespace griduq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_aligned(const char* what, std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError(fmt::format("{}: {} predictions for {} days", what, a, b));
}

}  // namespace

Grid cell_time_mean(std::span<const Grid> grids, std::span<const Mask> masks) {
  check_aligned("cell_time_mean", grids.size(), masks.size());
  if (grids.empty()) throw ContractError("cell_time_mean: no days");
  const int rows = grids[0].rows, cols = grids[0].cols;
  std::vector<double> sum(grids[0].size(), 0.0);
  std::vector<int> count(grids[0].size(), 0);
  for (std::size_t d = 0; d < grids.size(); ++d) {
    require_same_dims("cell_time_mean", rows, cols, grids[d].rows, grids[d].cols);
    require_same_dims("cell_time_mean mask", rows, cols, masks[d].rows, masks[d].cols);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (!masks[d].cells[i]) continue;
      sum[i] += grids[d].values[i];
      ++count[i];
    }
  }
  Grid out(rows, cols, grids[0].unit);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    out.values[i] = count[i] ? static_cast<float>(sum[i] / count[i]) : std::numeric_limits<float>::quiet_NaN();
  }
  return out;
}

UqStats cell_stats(std::span<const Grid> grids, std::span<const Mask> masks) {
  const Grid mean = cell_time_mean(grids, masks);
  UqStats s{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 0.0};
  std::size_t n = 0;
  double total = 0.0;
  for (float v : mean.values) {
    if (std::isnan(v)) continue;
    s.max = std::max(s.max, static_cast<double>(v));
    s.min = std::min(s.min, static_cast<double>(v));
    total += v;
    ++n;
  }
  if (n == 0) throw ContractError("cell_stats: no masked cells");
  s.avg = total / static_cast<double>(n);
  return s;
}

UqStats interval_stats(std::span<const CqrPrediction> preds, std::span<const Mask> masks) {
  std::vector<Grid> grids;
  grids.reserve(preds.size());
  for (const auto& p : preds) grids.push_back(p.interval_length);
  return cell_stats(grids, masks);
}

UqStats epistemic_stats(std::span<const McdPrediction> preds, std::span<const Mask> masks) {
  std::vector<Grid> grids;
  grids.reserve(preds.size());
  for (const auto& p : preds) grids.push_back(p.epistemic);
  return cell_stats(grids, masks);
}

double empirical_coverage(std::span<const CqrPrediction> preds, std::span<const GridSample> samples) {
  check_aligned("empirical_coverage", preds.size(), samples.size());
  std::size_t hit = 0, total = 0;
  for (std::size_t d = 0; d < preds.size(); ++d) {
    const auto& p = preds[d];
    const auto& s = samples[d];
    require_same_dims("empirical_coverage", p.lo.rows, p.lo.cols, s.y.rows, s.y.cols);
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!s.mask.cells[i]) continue;
      const float y = s.y.values[i];
      hit += (p.lo.values[i] <= y && y <= p.hi.values[i]) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : kNaN;
}

double crossing_rate(std::span<const CqrPrediction> preds, std::span<const Mask> masks) {
  check_aligned("crossing_rate", preds.size(), masks.size());
  std::size_t crossed = 0, total = 0;
  for (std::size_t d = 0; d < preds.size(); ++d) {
    const auto& p = preds[d];
    for (std::size_t i = 0; i < p.lo.size(); ++i) {
      if (!masks[d].cells[i]) continue;
      // Raw heads: lo + qhat and hi - qhat.
      const double raw_lo = static_cast<double>(p.lo.values[i]) + p.qhat;
      const double raw_hi = static_cast<double>(p.hi.values[i]) - p.qhat;
      crossed += raw_lo > raw_hi ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(crossed) / static_cast<double>(total) : kNaN;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  check_aligned("spearman", a.size(), b.size());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    x.push_back(a[i]);
    y.push_back(b[i]);
  }
  if (x.size() < 2) throw ContractError("spearman: fewer than two pairs");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0 || syy == 0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

StationRank rank_stations(std::span<const Grid> uq, std::span<const Grid> pred, std::span<const GridSample> samples,
                          const RegionSpec& spec) {
  check_aligned("rank_stations", uq.size(), samples.size());
  check_aligned("rank_stations", pred.size(), samples.size());
  if (samples.empty()) throw ContractError("rank_stations: no days");
  const int rows = samples[0].y.rows, cols = samples[0].y.cols;
  require_same_dims("rank_stations region", spec.rows, spec.cols, rows, cols);
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  std::vector<double> score(n, 0.0), sq(n, 0.0);
  std::vector<int> count(n, 0);
  for (std::size_t d = 0; d < samples.size(); ++d) {
    const auto& s = samples[d];
    require_same_dims("rank_stations", rows, cols, uq[d].rows, uq[d].cols);
    require_same_dims("rank_stations", rows, cols, pred[d].rows, pred[d].cols);
    for (std::size_t i = 0; i < n; ++i) {
      if (!s.mask.cells[i]) continue;
      score[i] += uq[d].values[i];
      const double e = static_cast<double>(pred[d].values[i]) - s.y.values[i];
      sq[i] += e * e;
      ++count[i];
    }
  }
  StationRank out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      if (!count[i]) continue;
      out.entries.push_back({r, c, spec.cell_lat(r), spec.cell_lon(c), score[i] / count[i],
                             std::sqrt(sq[i] / count[i])});
    }
  }
  if (out.entries.empty()) throw ContractError("rank_stations: no masked cells");
  // Entries are already in (row, col) order, so a stable sort settles ties.
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const StationEntry& a, const StationEntry& b) { return a.score > b.score; });
  return out;
}

DayMaps cqr_maps(Date date, const CqrPrediction& p) {
  return {date, {{"lo", p.lo}, {"mid", p.mid}, {"hi", p.hi}, {"interval", p.interval_length}}};
}

DayMaps mcd_maps(Date date, const McdPrediction& p) {
  return {date, {{"mean", p.mean}, {"epistemic", p.epistemic}, {"aleatoric", p.aleatoric}, {"total", p.total_variance()}}};
}

namespace {

Grid mean_of(std::span<const Grid* const> grids) {
  Grid out(grids[0]->rows, grids[0]->cols, grids[0]->unit);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (const Grid* g : grids) s += g->values[i];
    out.values[i] = static_cast<float>(s / static_cast<double>(grids.size()));
  }
  return out;
}

}  // namespace

CqrPrediction average(std::span<const CqrPrediction> members) {
  if (members.empty()) throw ContractError("average: no members");
  auto field = [&](auto get) {
    std::vector<const Grid*> grids;
    for (const auto& m : members) {
      require_same_dims("average", members[0].lo.rows, members[0].lo.cols, get(m).rows, get(m).cols);
      grids.push_back(&get(m));
    }
    return mean_of(grids);
  };
  CqrPrediction out;
  out.lo = field([](const CqrPrediction& p) -> const Grid& { return p.lo; });
  out.mid = field([](const CqrPrediction& p) -> const Grid& { return p.mid; });
  out.hi = field([](const CqrPrediction& p) -> const Grid& { return p.hi; });
  out.interval_length = field([](const CqrPrediction& p) -> const Grid& { return p.interval_length; });
  double q = 0.0;
  for (const auto& m : members) q += m.qhat;
  out.qhat = q / static_cast<double>(members.size());
  out.alpha = members[0].alpha;
  return out;
}

McdPrediction average(std::span<const McdPrediction> members) {
  if (members.empty()) throw ContractError("average: no members");
  auto field = [&](auto get) {
    std::vector<const Grid*> grids;
    for (const auto& m : members) {
      require_same_dims("average", members[0].mean.rows, members[0].mean.cols, get(m).rows, get(m).cols);
      grids.push_back(&get(m));
    }
    return mean_of(grids);
  };
  McdPrediction out;
  out.mean = field([](const McdPrediction& p) -> const Grid& { return p.mean; });
  out.epistemic = field([](const McdPrediction& p) -> const Grid& { return p.epistemic; });
  out.aleatoric = field([](const McdPrediction& p) -> const Grid& { return p.aleatoric; });
  out.passes = members[0].passes;
  return out;
}

// ---------------------------------------------------------------------------

Rgb diverging_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  // Dark blue (0, 0, 139) -> white -> dark red (139, 0, 0).
  auto lerp = [](double a, double b, double u) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * u)); };
  if (t <= 0.5) {
    const double u = t / 0.5;
    return {lerp(0, 255, u), lerp(0, 255, u), lerp(139, 255, u)};
  }
  const double u = (t - 0.5) / 0.5;
  return {lerp(255, 139, u), lerp(255, 0, u), lerp(255, 0, u)};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

void export_heatmap(const Grid& grid, const std::filesystem::path& path, ColorScale scale, int cell_px) {
  if (cell_px < 1) throw ContractError("export_heatmap: cell_px must be >= 1");
  double lo = scale.lo, hi = scale.hi;
  if (scale.automatic) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (float v : grid.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }
  const int width = grid.cols * cell_px, height = grid.rows * cell_px;
  std::string out = fmt::format("P6\n{} {}\n255\n", width, height);
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(width) * height * 3);
  std::size_t pos = header;
  for (int r = 0; r < grid.rows; ++r) {
    std::vector<Rgb> line(static_cast<std::size_t>(grid.cols));
    for (int c = 0; c < grid.cols; ++c) {
      const float v = grid.at(r, c);
      if (!std::isfinite(v)) {
        line[c] = kSentinelColor;
      } else {
        line[c] = diverging_color(hi > lo ? (v - lo) / (hi - lo) : 0.5);
      }
    }
    for (int py = 0; py < cell_px; ++py) {
      for (int c = 0; c < grid.cols; ++c) {
        for (int px = 0; px < cell_px; ++px) {
          out[pos++] = static_cast<char>(line[c].r);
          out[pos++] = static_cast<char>(line[c].g);
          out[pos++] = static_cast<char>(line[c].b);
        }
      }
    }
  }
  write_text_file(path, out);
}

void export_csv(const Grid& grid, const RegionSpec& spec, const std::filesystem::path& path) {
  require_same_dims("export_csv region", spec.rows, spec.cols, grid.rows, grid.cols);
  std::string out = "row,col,lat,lon,value\n";
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      out += fmt::format("{},{},{:.6f},{:.6f},{:.9g}\n", r, c, spec.cell_lat(r), spec.cell_lon(c), grid.at(r, c));
    }
  }
  write_text_file(path, out);
}

Grid read_grid_csv(const std::filesystem::path& path, Unit unit) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "row,col,lat,lon,value") {
    throw FormatError(path.string() + ": missing grid CSV header");
  }
  struct Cell {
    int r, c;
    float v;
  };
  std::vector<Cell> cells;
  int rows = 0, cols = 0;
  for (int lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 5) throw FormatError(fmt::format("{}:{}: expected 5 fields", path.string(), lineno));
    try {
      std::size_t used = 0;
      Cell cell{std::stoi(f[0]), std::stoi(f[1]), std::stof(f[4], &used)};
      if (used != f[4].size()) throw std::invalid_argument("trailing characters");
      if (cell.r < 0 || cell.c < 0) throw std::invalid_argument("negative index");
      rows = std::max(rows, cell.r + 1);
      cols = std::max(cols, cell.c + 1);
      cells.push_back(cell);
    } catch (const std::out_of_range&) {
      // stof reports subnormals this way; parse them with strtof instead.
      char* end = nullptr;
      const float v = std::strtof(f[4].c_str(), &end);
      cells.push_back({std::stoi(f[0]), std::stoi(f[1]), v});
      rows = std::max(rows, cells.back().r + 1);
      cols = std::max(cols, cells.back().c + 1);
    } catch (const std::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  if (cells.size() != static_cast<std::size_t>(rows) * cols) {
    throw FormatError(fmt::format("{}: {} cells for a {}x{} grid", path.string(), cells.size(), rows, cols));
  }
  Grid g(rows, cols, unit, std::numeric_limits<float>::quiet_NaN());
  std::vector<std::uint8_t> seen(g.size(), 0);
  for (const auto& cell : cells) {
    const std::size_t i = static_cast<std::size_t>(cell.r) * cols + cell.c;
    if (seen[i]++) throw FormatError(fmt::format("{}: duplicate cell ({}, {})", path.string(), cell.r, cell.c));
    g.values[i] = cell.v;
  }
  return g;
}

// ---------------------------------------------------------------------------

void MetricsReport::aggregate() {
  if (seeds.empty()) throw ContractError("MetricsReport: no seeds");
  std::vector<double> rmse;
  for (const auto& s : seeds) rmse.push_back(s.rmse);
  this->rmse = aggregate_seeds(rmse);
  auto mean_stats = [&](auto get) -> std::optional<UqStats> {
    UqStats acc;
    for (const auto& s : seeds) {
      const std::optional<UqStats>& v = get(s);
      if (!v) return std::nullopt;
      acc.max += v->max;
      acc.min += v->min;
      acc.avg += v->avg;
    }
    const double n = static_cast<double>(seeds.size());
    return UqStats{acc.max / n, acc.min / n, acc.avg / n};
  };
  auto mean_rate = [&](auto get) -> std::optional<double> {
    double acc = 0.0;
    for (const auto& s : seeds) {
      const std::optional<double>& v = get(s);
      if (!v) return std::nullopt;
      acc += *v;
    }
    return acc / static_cast<double>(seeds.size());
  };
  interval = mean_stats([](const SeedMetrics& s) -> const std::optional<UqStats>& { return s.interval; });
  epistemic = mean_stats([](const SeedMetrics& s) -> const std::optional<UqStats>& { return s.epistemic; });
  coverage = mean_rate([](const SeedMetrics& s) -> const std::optional<double>& { return s.coverage; });
  crossing_rate = mean_rate([](const SeedMetrics& s) -> const std::optional<double>& { return s.crossing_rate; });
}

std::string MetricsReport::to_text() const {
  std::string out;
  auto kv = [&](std::string_view k, auto v) { out += fmt::format("{}={}\n", k, v); };
  auto num = [&](std::string_view k, double v) { out += fmt::format("{}={:.9g}\n", k, v); };
  kv("region", region);
  kv("uq_method", uq_method);
  kv("n_channels", n_channels);
  kv("n_seeds", seeds.size());
  kv("test_days", test_days);
  num("rmse_mean", rmse.mean);
  num("rmse_variance", rmse.variance);
  num("rmse_std", rmse.stddev());
  if (interval) {
    num("interval_max", interval->max);
    num("interval_min", interval->min);
    num("interval_avg", interval->avg);
  }
  if (epistemic) {
    num("epistemic_max", epistemic->max);
    num("epistemic_min", epistemic->min);
    num("epistemic_avg", epistemic->avg);
  }
  if (coverage) num("coverage", *coverage);
  if (crossing_rate) num("crossing_rate", *crossing_rate);
  out += "\nseed,rmse,interval_max,interval_min,interval_avg,epistemic_max,epistemic_min,epistemic_avg,coverage,"
         "crossing_rate,qhat\n";
  auto opt = [](const auto& v, auto get) { return v ? fmt::format("{:.9g}", get(*v)) : std::string(); };
  for (const auto& s : seeds) {
    out += fmt::format(
        "{},{:.9g},{},{},{},{},{},{},{},{},{}\n", s.seed, s.rmse, opt(s.interval, [](auto& v) { return v.max; }),
        opt(s.interval, [](auto& v) { return v.min; }), opt(s.interval, [](auto& v) { return v.avg; }),
        opt(s.epistemic, [](auto& v) { return v.max; }), opt(s.epistemic, [](auto& v) { return v.min; }),
        opt(s.epistemic, [](auto& v) { return v.avg; }), opt(s.coverage, [](double v) { return v; }),
        opt(s.crossing_rate, [](double v) { return v; }), opt(s.qhat, [](double v) { return v; }));
  }
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  write_text_file(path, report.to_text());
}

}  // namespace griduq
