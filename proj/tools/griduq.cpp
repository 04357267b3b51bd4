// griduq command-line front end: dataset generation, training, evaluation
// and export.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "griduq/errors.hpp"
#include "griduq/eval.hpp"
#include "griduq/log.hpp"
#include "griduq/pipeline.hpp"
#include "griduq/threads.hpp"

namespace {

using namespace griduq;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : CLI::detail::split(text, ',')) {
    std::size_t used = 0;
    out.push_back(std::stoull(tok, &used));
    if (used != tok.size()) throw CLI::ValidationError("--seeds", "bad seed '" + tok + "'");
  }
  return out;
}

std::vector<int> parse_days(const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : CLI::detail::split(text, ',')) {
    std::size_t used = 0;
    out.push_back(std::stoi(tok, &used));
    if (used != tok.size()) throw CLI::ValidationError("--days", "bad day '" + tok + "'");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gridded bias emulation with uncertainty quantification"};
  app.require_subcommand(1);
  app.fallthrough();
  bool deterministic = false;
  bool quiet = false;
  app.add_flag("--deterministic", deterministic, "single-threaded, bitwise-reproducible run");
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  GenRequest gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic GUQD dataset");
  gen_cmd->add_option("--region", gen.region)->check(CLI::IsMember({"na", "eu", "synth"}))->required();
  gen_cmd->add_option("--days", gen.days)->check(CLI::PositiveNumber)->required();
  gen_cmd->add_option("--channels", gen.channels)->check(CLI::IsMember({28, 51}))->required();
  gen_cmd->add_option("--noise", gen.noise, "homo:SIGMA or hetero")->required();
  gen_cmd->add_option("--density", gen.density)->check(CLI::Range(0.0, 1.0))->required();
  gen_cmd->add_option("--seed", gen.seed)->required();
  gen_cmd->add_option("--rows", gen.rows, "grid rows (synth only)")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--cols", gen.cols, "grid columns (synth only)")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out)->required();

  std::filesystem::path data_dir, runs_dir, out_path;
  TrainConfig tc;
  std::string uq = "mcd", seeds = "0,1,2,3,4";
  auto* train_cmd = app.add_subcommand("train", "train one model per seed");
  train_cmd->add_option("--data", data_dir)->required();
  train_cmd->add_option("--uq", uq)->check(CLI::IsMember({"mcd", "cqr"}))->required();
  train_cmd->add_option("--epochs", tc.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", tc.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--dropout", tc.dropout_rate)->check(CLI::Range(0.0, 0.999))->capture_default_str();
  train_cmd->add_option("--batch", tc.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--seeds", seeds)->capture_default_str();
  train_cmd->add_option("--alpha", tc.alpha)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train_cmd->add_option("--mc-passes", tc.mc_passes, "MC dropout passes at inference")->capture_default_str();
  train_cmd->add_option("--base-width", tc.base_width, "channels of the first U-Net level")->capture_default_str();
  train_cmd->add_option("--depth", tc.depth, "U-Net downsampling levels")->capture_default_str();
  train_cmd->add_option("--out", runs_dir)->required();

  auto* eval_cmd = app.add_subcommand("eval", "test-month metrics report");
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--runs", runs_dir)->required();
  eval_cmd->add_option("--out", out_path)->required();

  int top = 10;
  auto* rank_cmd = app.add_subcommand("rank", "rank station cells by mean UQ");
  rank_cmd->add_option("--data", data_dir)->required();
  rank_cmd->add_option("--runs", runs_dir)->required();
  rank_cmd->add_option("--top", top)->check(CLI::PositiveNumber)->required();
  rank_cmd->add_option("--out", out_path)->required();

  double lat = 0.0, lon = 0.0;
  auto* series_cmd = app.add_subcommand("series", "test-month series at one location");
  series_cmd->add_option("--data", data_dir)->required();
  series_cmd->add_option("--runs", runs_dir)->required();
  series_cmd->add_option("--lat", lat)->required();
  series_cmd->add_option("--lon", lon)->required();
  series_cmd->add_option("--out", out_path)->required();

  std::string days = "1,7,15,21,30";
  auto* extra_cmd = app.add_subcommand("extrapolate", "full-grid UQ maps for chosen test days");
  extra_cmd->add_option("--data", data_dir)->required();
  extra_cmd->add_option("--runs", runs_dir)->required();
  extra_cmd->add_option("--days", days)->capture_default_str();
  extra_cmd->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    set_quiet(quiet);
    const int threads = configure_threads(deterministic);
    info(fmt::format("using {} thread(s)", threads));

    if (*gen_cmd) {
      const Dataset d = run_gen(gen);
      info(fmt::format("wrote {} days of {}x{}x{} to {}", d.samples.size(), d.channels(), d.region.rows,
                       d.region.cols, gen.out.string()));
    } else if (*train_cmd) {
      tc.method = parse_uq(uq);
      tc.seeds = parse_seeds(seeds);
      tc.output_dir = runs_dir;
      tc.validate();
      const Dataset d = read_dataset(data_dir);
      const MultiSeedResult r = run_train(d, tc);
      for (const auto& [seed, why] : r.failures) std::fprintf(stderr, "seed %llu failed: %s\n",
                                                              static_cast<unsigned long long>(seed), why.c_str());
      if (r.runs.empty()) return 1;
      info(fmt::format("val RMSE {:.4f} +/- {:.4f} (variance) over {} seed(s)", r.val_rmse.mean, r.val_rmse.variance,
                       r.runs.size()));
    } else if (*eval_cmd) {
      const MetricsReport report = run_eval(read_dataset(data_dir), load_runs(runs_dir));
      write_eval_outputs(report, out_path);
      if (!quiet) std::fputs(report.to_text().c_str(), stdout);
    } else if (*rank_cmd) {
      const RunSet runs = load_runs(runs_dir);
      const StationRank rank = run_rank(read_dataset(data_dir), runs);
      write_text_file(out_path, format_ranks(rank, top, uq_key(runs.config.train.method)));
    } else if (*series_cmd) {
      const auto rows = run_series(read_dataset(data_dir), load_runs(runs_dir), lat, lon);
      write_text_file(out_path, format_series(rows));
    } else if (*extra_cmd) {
      const auto day_list = parse_days(days);
      const auto written = run_extrapolate(read_dataset(data_dir), load_runs(runs_dir), day_list, out_path);
      info(fmt::format("wrote {} files to {}", written.size(), out_path.string()));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
