#include "griduq/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "griduq/checkpoint.hpp"
#include "griduq/errors.hpp"
#include "griduq/log.hpp"
#include "griduq/random.hpp"

namespace griduq {

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    out.push_back(std::stoull(tok, &used));
    if (used != tok.size()) throw FormatError("bad seed '" + tok + "'");
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

GridSample standardized_copy(const GridSample& raw, const ChannelStats& stats) {
  GridSample s = raw;
  standardize(s, stats);
  return s;
}

/// Two-sided standard normal quantile for a central (1 - alpha) interval.
double central_z(double alpha) {
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    (std::erfc(m / std::sqrt(2.0)) > alpha ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

std::uint64_t date_key(Date d) {
  return static_cast<std::uint64_t>(std::chrono::sys_days(d).time_since_epoch().count());
}

RegionSpec region_for(const std::string& key, int rows, int cols) {
  switch (parse_region(key)) {
    case Region::NorthAmerica: return RegionSpec::north_america();
    case Region::Europe: return RegionSpec::europe();
    case Region::Synthetic: return RegionSpec::synthetic(rows, cols);
  }
  throw ContractError("unreachable region");
}

}  // namespace

std::string format_runs_config(const RunsConfig& c) {
  const TrainConfig& t = c.train;
  std::string seeds;
  for (std::size_t i = 0; i < t.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(t.seeds[i]);
  return fmt::format(
      "region={}\nin_channels={}\nuq={}\nepochs={}\nlr={}\ndropout={}\nbatch={}\nseeds={}\nalpha={}\n"
      "mc_passes={}\nbase_width={}\ndepth={}\ntrain_fraction={}\nclip_norm={}\n",
      c.region, c.in_channels, uq_key(t.method), t.epochs, t.lr, t.dropout_rate, t.batch_size, seeds, t.alpha,
      t.mc_passes, t.base_width, t.depth, t.train_fraction, t.clip_norm);
}

RunsConfig parse_runs_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("runs config lacks '") + key + "'");
    return it->second;
  };
  RunsConfig c;
  try {
    c.region = get("region");
    c.in_channels = std::stoi(get("in_channels"));
    TrainConfig& t = c.train;
    t.method = parse_uq(get("uq"));
    t.epochs = std::stoi(get("epochs"));
    t.lr = std::stof(get("lr"));
    t.dropout_rate = std::stof(get("dropout"));
    t.batch_size = std::stoi(get("batch"));
    t.seeds = parse_seed_list(get("seeds"));
    t.alpha = std::stod(get("alpha"));
    t.mc_passes = std::stoi(get("mc_passes"));
    t.base_width = std::stoi(get("base_width"));
    t.depth = std::stoi(get("depth"));
    t.train_fraction = std::stod(get("train_fraction"));
    t.clip_norm = std::stod(get("clip_norm"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("runs config: ") + e.what());
  }
  c.train.validate();
  return c;
}

void write_runs_config(const std::filesystem::path& dir, const RunsConfig& c) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "config.txt", format_runs_config(c));
}

RunsConfig read_runs_config(const std::filesystem::path& dir) {
  return parse_runs_config(read_text_file(dir / "config.txt"));
}

RunSet load_runs(const std::filesystem::path& dir) {
  RunSet runs;
  runs.config = read_runs_config(dir);
  runs.config.train.output_dir = dir;
  const ModelConfig mc = runs.config.train.model_config(runs.config.in_channels);
  for (std::uint64_t seed : runs.config.train.seeds) {
    const auto path = dir / fmt::format("seed{}_best.guqw", seed);
    if (!std::filesystem::exists(path)) {
      warn(fmt::format("no checkpoint for seed {} in {}", seed, dir.string()));
      continue;
    }
    runs.models.push_back({seed, model_from_checkpoint(mc, load_checkpoint(path))});
    if (runs.config.train.method == UqMethod::Cqr && !runs.models.back().model.qhat) {
      throw FormatError(path.string() + ": CQR checkpoint without a calibrated qhat");
    }
  }
  if (runs.models.empty()) throw IoError("no trained checkpoints in " + dir.string());
  return runs;
}

DataSplit split_holdout(const Dataset& dataset) {
  const auto [pool_idx, test_idx] = holdout_latest_year(dataset.samples);
  DataSplit out;
  for (auto i : pool_idx) out.pool.push_back(dataset.samples[i]);
  for (auto i : test_idx) out.test.push_back(dataset.samples[i]);
  return out;
}

CqrPrediction predict_cqr(const TrainedModel& model, const GridSample& raw, double alpha) {
  if (!model.qhat) throw ContractError("predict_cqr: model is not calibrated");
  return cqr_predict(model.params, standardized_copy(raw, model.stats).x, *model.qhat, alpha);
}

McdPrediction predict_mcd(const TrainedModel& model, const GridSample& raw, int passes, std::uint64_t seed) {
  Rng rng(derive_seed(derive_seed(seed, 0xE7A1), date_key(raw.date)));
  return mc_dropout_predict(model.params, standardized_copy(raw, model.stats).x, passes, rng);
}

std::vector<CqrPrediction> ensemble_cqr(const RunSet& runs, std::span<const GridSample> samples) {
  std::vector<CqrPrediction> out;
  for (const auto& s : samples) {
    std::vector<CqrPrediction> members;
    for (const auto& m : runs.models) members.push_back(predict_cqr(m.model, s, runs.config.train.alpha));
    out.push_back(average(members));
  }
  return out;
}

std::vector<McdPrediction> ensemble_mcd(const RunSet& runs, std::span<const GridSample> samples) {
  std::vector<McdPrediction> out;
  for (const auto& s : samples) {
    std::vector<McdPrediction> members;
    for (const auto& m : runs.models) members.push_back(predict_mcd(m.model, s, runs.config.train.mc_passes, m.seed));
    out.push_back(average(members));
  }
  return out;
}

UqSeries ensemble_scores(const RunSet& runs, std::span<const GridSample> samples) {
  UqSeries out;
  if (runs.config.train.method == UqMethod::Cqr) {
    for (auto& p : ensemble_cqr(runs, samples)) {
      out.point.push_back(std::move(p.mid));
      out.score.push_back(std::move(p.interval_length));
    }
  } else {
    for (auto& p : ensemble_mcd(runs, samples)) {
      out.point.push_back(std::move(p.mean));
      out.score.push_back(std::move(p.epistemic));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Dataset run_gen(const GenRequest& req) {
  SyntheticOptions o;
  o.region = region_for(req.region, req.rows, req.cols);
  o.n_days = req.days;
  o.channels = req.channels;
  o.noise = NoiseProfile::parse(req.noise);
  o.station_density = req.density;
  o.seed = req.seed;
  Dataset d = generate_synthetic(o);
  if (!req.out.empty()) write_dataset(req.out, d);
  return d;
}

MultiSeedResult run_train(const Dataset& dataset, const TrainConfig& config) {
  const DataSplit parts = split_holdout(dataset);
  if (!config.output_dir.empty()) {
    write_runs_config(config.output_dir, {config, region_key(dataset.region.region), dataset.channels()});
  }
  return train_all_seeds(config, parts.pool);
}

MetricsReport run_eval(const Dataset& dataset, const RunSet& runs) {
  const DataSplit parts = split_holdout(dataset);
  if (parts.test.empty()) throw ContractError("eval: dataset has no test days");
  const TrainConfig& tc = runs.config.train;
  MetricsReport report;
  report.region = region_key(dataset.region.region);
  report.uq_method = uq_key(tc.method);
  report.n_channels = dataset.channels();
  report.test_days = static_cast<int>(parts.test.size());
  std::vector<Mask> masks;
  for (const auto& s : parts.test) masks.push_back(s.mask);
  for (const auto& m : runs.models) {
    SeedMetrics row;
    row.seed = m.seed;
    RmseAccumulator acc;
    if (tc.method == UqMethod::Cqr) {
      std::vector<CqrPrediction> preds;
      for (const auto& s : parts.test) {
        preds.push_back(predict_cqr(m.model, s, tc.alpha));
        acc.add(preds.back().mid, s.y, s.mask);
      }
      row.interval = interval_stats(preds, masks);
      row.coverage = empirical_coverage(preds, parts.test);
      row.crossing_rate = crossing_rate(preds, masks);
      row.qhat = m.model.qhat;
    } else {
      std::vector<McdPrediction> preds;
      for (const auto& s : parts.test) {
        preds.push_back(predict_mcd(m.model, s, tc.mc_passes, m.seed));
        acc.add(preds.back().mean, s.y, s.mask);
      }
      row.epistemic = epistemic_stats(preds, masks);
    }
    row.rmse = acc.rmse();
    report.seeds.push_back(row);
  }
  report.aggregate();
  return report;
}

void write_eval_outputs(const MetricsReport& report, const std::filesystem::path& out) {
  write_report(report, out);
}

StationRank run_rank(const Dataset& dataset, const RunSet& runs) {
  const DataSplit parts = split_holdout(dataset);
  const UqSeries series = ensemble_scores(runs, parts.test);
  return rank_stations(series.score, series.point, parts.test, dataset.region);
}

std::string format_ranks(const StationRank& rank, int top, const std::string& method) {
  if (top < 1) throw ContractError("rank: --top must be >= 1");
  const int n = static_cast<int>(rank.entries.size());
  const int k = std::min(top, n);
  std::string out = "group,rank,row,col,lat,lon,mean_uq,rmse,method\n";
  auto line = [&](const char* group, int pos) {
    const auto& e = rank.entries[static_cast<std::size_t>(pos)];
    out += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.9g},{:.9g},{}\n", group, pos + 1, e.row, e.col, e.lat, e.lon,
                       e.score, e.rmse, method);
  };
  for (int i = 0; i < k; ++i) line("top", i);
  for (int i = n - 1; i >= n - k; --i) line("bottom", i);
  return out;
}

std::vector<SeriesRow> run_series(const Dataset& dataset, const RunSet& runs, double lat, double lon) {
  const auto cell = dataset.region.cell_of(lat, lon);
  const DataSplit parts = split_holdout(dataset);
  std::vector<SeriesRow> rows;
  auto at = [&](const Grid& g) { return g.at(cell.row, cell.col); };
  bool any_station = false;
  if (runs.config.train.method == UqMethod::Cqr) {
    const auto preds = ensemble_cqr(runs, parts.test);
    for (std::size_t d = 0; d < preds.size(); ++d) {
      rows.push_back({parts.test[d].date, at(parts.test[d].y), at(preds[d].mid), at(preds[d].lo), at(preds[d].hi)});
    }
  } else {
    const double z = central_z(runs.config.train.alpha);
    const auto preds = ensemble_mcd(runs, parts.test);
    for (std::size_t d = 0; d < preds.size(); ++d) {
      const double mean = at(preds[d].mean);
      const double sd = std::sqrt(static_cast<double>(at(preds[d].epistemic)) + at(preds[d].aleatoric));
      rows.push_back({parts.test[d].date, at(parts.test[d].y), static_cast<float>(mean),
                      static_cast<float>(mean - z * sd), static_cast<float>(mean + z * sd)});
    }
  }
  for (const auto& r : rows) any_station = any_station || !std::isnan(r.y);
  if (!any_station) warn(fmt::format("cell ({}, {}) has no station in the test month", cell.row, cell.col));
  return rows;
}

std::string format_series(std::span<const SeriesRow> rows) {
  std::string out = "date,y,mid,lo,hi\n";
  for (const auto& r : rows) {
    const std::string y = std::isnan(r.y) ? std::string() : fmt::format("{:.9g}", r.y);
    out += fmt::format("{},{},{:.9g},{:.9g},{:.9g}\n", format_date(r.date), y, r.mid, r.lo, r.hi);
  }
  return out;
}

std::vector<std::filesystem::path> run_extrapolate(const Dataset& dataset, const RunSet& runs,
                                                   std::span<const int> days, const std::filesystem::path& out) {
  const DataSplit parts = split_holdout(dataset);
  std::vector<GridSample> chosen;
  for (int day : days) {
    if (day < 1 || day > static_cast<int>(parts.test.size())) {
      throw ContractError(fmt::format("extrapolate: day {} outside the {}-day test month", day, parts.test.size()));
    }
    chosen.push_back(parts.test[static_cast<std::size_t>(day - 1)]);
  }
  std::vector<DayMaps> maps;
  if (runs.config.train.method == UqMethod::Cqr) {
    const auto preds = ensemble_cqr(runs, chosen);
    for (std::size_t i = 0; i < preds.size(); ++i) maps.push_back(cqr_maps(chosen[i].date, preds[i]));
  } else {
    const auto preds = ensemble_mcd(runs, chosen);
    for (std::size_t i = 0; i < preds.size(); ++i) maps.push_back(mcd_maps(chosen[i].date, preds[i]));
  }
  std::filesystem::create_directories(out);
  std::vector<std::filesystem::path> written;
  const std::string method = uq_key(runs.config.train.method);
  for (const auto& day : maps) {
    for (const auto& m : day.maps) {
      const std::string stem = fmt::format("{}_{}_{}", format_date(day.date), method, m.name);
      written.push_back(out / (stem + ".ppm"));
      export_heatmap(m.grid, written.back(), {}, 8);
      written.push_back(out / (stem + ".csv"));
      export_csv(m.grid, dataset.region, written.back());
    }
  }
  return written;
}

}  // namespace griduq
