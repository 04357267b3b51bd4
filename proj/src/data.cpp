#include "griduq/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "griduq/binary_io.hpp"
#include "griduq/errors.hpp"
#include "griduq/log.hpp"
#include "griduq/random.hpp"

namespace griduq {

namespace fs = std::filesystem;

std::string format_date(Date d) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                     static_cast<unsigned>(d.day()));
}

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream is(text);
  if (text.size() != 10 || !(is >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-') {
    throw FormatError("unparseable date '" + text + "' (expected YYYY-MM-DD)");
  }
  Date date{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
  if (!date.ok()) throw FormatError("invalid calendar date '" + text + "'");
  return date;
}

// ---------------------------------------------------------------------------
// Regions

RegionSpec RegionSpec::north_america() { return {Region::NorthAmerica, 31, 49, 55.0, -120.0, 1.0}; }
RegionSpec RegionSpec::europe() { return {Region::Europe, 31, 27, 66.0, -10.0, 1.0}; }
RegionSpec RegionSpec::synthetic(int rows, int cols) { return {Region::Synthetic, rows, cols, 60.0, 0.0, 1.0}; }

RegionSpec::Cell RegionSpec::cell_of(double lat, double lon) const {
  const int row = static_cast<int>(std::floor((lat0 - lat) / cell_size));
  const int col = static_cast<int>(std::floor((lon - lon0) / cell_size));
  if (row < 0 || row >= rows || col < 0 || col >= cols) {
    throw ContractError(fmt::format("({}, {}) lies outside the region extent lat ({}, {}], lon [{}, {})", lat, lon,
                                    lat0 - rows * cell_size, lat0, lon0, lon0 + cols * cell_size));
  }
  return {row, col};
}

const char* region_key(Region r) {
  switch (r) {
    case Region::NorthAmerica: return "na";
    case Region::Europe: return "eu";
    case Region::Synthetic: return "synth";
  }
  return "?";
}

Region parse_region(const std::string& key) {
  if (key == "na") return Region::NorthAmerica;
  if (key == "eu") return Region::Europe;
  if (key == "synth") return Region::Synthetic;
  throw FormatError("unknown region '" + key + "' (expected na, eu or synth)");
}

// ---------------------------------------------------------------------------
// GUQD files

void write_sample(const fs::path& file, const GridSample& s) {
  if (s.x.rank() != 3) throw DimensionError("write_sample: x must be [C,H,W], got " + shape_str(s.x.shape()));
  const int c = s.x.dim(0), h = s.x.dim(1), w = s.x.dim(2);
  require_same_dims("write_sample(y)", s.y.rows, s.y.cols, h, w);
  require_same_dims("write_sample(mask)", s.mask.rows, s.mask.cols, h, w);
  if (c > 0xFFFF || h > 0xFFFF || w > 0xFFFF) throw FormatError("write_sample: dimensions exceed u16");
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + file.string());
  os.write(kDatasetMagic, 4);
  binio::write_le<std::uint16_t>(os, kDatasetVersion);
  binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(c));
  binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(h));
  binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(w));
  for (float v : s.x.data()) binio::write_f32(os, v);
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    if (s.mask.cells[i]) {
      binio::write_f32(os, s.y.values[i]);
    } else {
      binio::write_le<std::uint32_t>(os, kTargetSentinelBits);
    }
  }
  for (auto m : s.mask.cells) binio::write_f32(os, m ? 1.0f : 0.0f);
  if (!os) throw IoError("failed writing " + file.string());
}

GridSample read_sample(const fs::path& file) {
  const std::string ctx = file.string();
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open " + ctx);
  char magic[4] = {};
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kDatasetMagic)) {
    throw FormatError(ctx + ": bad magic (not a GUQD day file)");
  }
  const auto version = binio::read_le<std::uint16_t>(is, ctx);
  if (version != kDatasetVersion) throw FormatError(fmt::format("{}: unsupported version {}", ctx, version));
  const int c = binio::read_le<std::uint16_t>(is, ctx);
  const int h = binio::read_le<std::uint16_t>(is, ctx);
  const int w = binio::read_le<std::uint16_t>(is, ctx);
  GridSample s;
  s.date = parse_date(file.stem().string());
  std::vector<float> x(static_cast<std::size_t>(c) * h * w);
  for (auto& v : x) v = binio::read_f32(is, ctx);
  s.x = Tensor({c, h, w}, std::move(x));
  s.y = Grid(h, w, Unit::Ppb);
  for (auto& v : s.y.values) v = binio::read_f32(is, ctx);
  s.mask = Mask(h, w);
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    const float m = binio::read_f32(is, ctx);
    if (m != 0.0f && m != 1.0f) throw FormatError(fmt::format("{}: mask plane value {} at pixel {}", ctx, m, i));
    s.mask.cells[i] = m == 1.0f ? 1 : 0;
    if (s.mask.cells[i] && !std::isfinite(s.y.values[i])) {
      throw FormatError(fmt::format("{}: non-finite target at station pixel {}", ctx, i));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(ctx + ": trailing bytes");
  return s;
}

namespace {

constexpr const char* kManifest = "manifest.txt";

std::map<std::string, std::string> read_key_values(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw FormatError("missing " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(fmt::format("{}:{}: expected key=value", file.string(), lineno));
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string take(std::map<std::string, std::string>& kv, const std::string& key, const fs::path& file) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError(file.string() + ": missing key '" + key + "'");
  std::string v = it->second;
  kv.erase(it);
  return v;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("manifest key '" + key + "' is not an integer: " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("manifest key '" + key + "' is not a number: " + v);
  }
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& d) {
  fs::create_directories(dir);
  for (const auto& s : d.samples) {
    if (s.x.rank() != 3 || s.x.dim(0) != d.channels() || s.x.dim(1) != d.region.rows || s.x.dim(2) != d.region.cols) {
      throw DimensionError(fmt::format("write_dataset: sample {} has x {}, dataset is {}x{}x{}", format_date(s.date),
                                       shape_str(s.x.shape()), d.channels(), d.region.rows, d.region.cols));
    }
  }
  {
    std::ofstream os(dir / kManifest, std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / kManifest).string());
    os << "region=" << region_key(d.region.region) << '\n'
       << "H=" << d.region.rows << '\n'
       << "W=" << d.region.cols << '\n'
       << "channels=" << d.channels() << '\n'
       << "n_days=" << d.samples.size() << '\n'
       << "channel_names=" << fmt::format("{}", fmt::join(d.channel_names, ",")) << '\n'
       << "lat0=" << fmt::format("{}", d.region.lat0) << '\n'
       << "lon0=" << fmt::format("{}", d.region.lon0) << '\n'
       << "cell_size=" << fmt::format("{}", d.region.cell_size) << '\n';
    for (const auto& [k, v] : d.attributes) os << k << '=' << v << '\n';
    if (!os) throw IoError("failed writing manifest in " + dir.string());
  }
  for (const auto& s : d.samples) write_sample(dir / (format_date(s.date) + ".guq"), s);
}

Dataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const fs::path manifest = dir / kManifest;
  auto kv = read_key_values(manifest);
  Dataset d;
  d.region.region = parse_region(take(kv, "region", manifest));
  d.region.rows = to_int(take(kv, "H", manifest), "H");
  d.region.cols = to_int(take(kv, "W", manifest), "W");
  const int channels = to_int(take(kv, "channels", manifest), "channels");
  const int n_days = to_int(take(kv, "n_days", manifest), "n_days");
  d.channel_names = split_csv(take(kv, "channel_names", manifest));
  if (static_cast<int>(d.channel_names.size()) != channels) {
    throw FormatError(fmt::format("{}: {} channel names for {} channels", manifest.string(), d.channel_names.size(),
                                  channels));
  }
  const RegionSpec defaults = d.region.region == Region::NorthAmerica ? RegionSpec::north_america()
                              : d.region.region == Region::Europe     ? RegionSpec::europe()
                                                                      : RegionSpec::synthetic(d.region.rows, d.region.cols);
  d.region.lat0 = kv.count("lat0") ? to_double(take(kv, "lat0", manifest), "lat0") : defaults.lat0;
  d.region.lon0 = kv.count("lon0") ? to_double(take(kv, "lon0", manifest), "lon0") : defaults.lon0;
  d.region.cell_size = kv.count("cell_size") ? to_double(take(kv, "cell_size", manifest), "cell_size")
                                             : defaults.cell_size;
  d.attributes = std::move(kv);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".guq") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (static_cast<int>(files.size()) != n_days) {
    throw FormatError(fmt::format("{}: manifest lists {} days, found {} .guq files", dir.string(), n_days,
                                  files.size()));
  }
  for (const auto& f : files) {
    GridSample s = read_sample(f);
    if (s.x.dim(0) != channels) {
      throw FormatError(fmt::format("{}: {} channels, dataset has {}", f.string(), s.x.dim(0), channels));
    }
    if (s.x.dim(1) != d.region.rows || s.x.dim(2) != d.region.cols) {
      throw FormatError(fmt::format("{}: grid {}x{}, dataset is {}x{}", f.string(), s.x.dim(1), s.x.dim(2),
                                    d.region.rows, d.region.cols));
    }
    d.samples.push_back(std::move(s));
  }
  std::sort(d.samples.begin(), d.samples.end(),
            [](const GridSample& a, const GridSample& b) { return a.date < b.date; });
  return d;
}

// ---------------------------------------------------------------------------
// Splits and standardization

SplitIndices split(std::size_t n, double train_frac, bool calib, std::uint64_t seed) {
  if (n < 10) throw ContractError(fmt::format("split: need at least 10 samples, got {}", n));
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ContractError(fmt::format("split: train fraction {} outside (0,1)", train_frac));
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  if (n_train < (calib ? 2u : 1u) || n_train >= n) {
    throw ContractError(fmt::format("split: {} samples cannot be split at fraction {}", n, train_frac));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SplitIndices out;
  const std::size_t n_fit = calib ? n_train / 2 : n_train;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));
  out.calibration.assign(order.begin() + static_cast<std::ptrdiff_t>(n_fit),
                         order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.calibration.begin(), out.calibration.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_latest_year(std::span<const GridSample> samples) {
  if (samples.empty()) throw ContractError("holdout: empty dataset");
  std::chrono::year latest = samples.front().date.year();
  for (const auto& s : samples) latest = std::max(latest, s.date.year());
  std::vector<std::size_t> dev, test;
  for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].date.year() == latest ? test : dev).push_back(i);
  if (dev.empty()) {
    throw ContractError("holdout: every day falls in one year; the latest year is reserved for testing");
  }
  return {std::move(dev), std::move(test)};
}

ChannelStats compute_channel_stats(std::span<const GridSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("channel stats: no samples selected");
  const int c = samples[indices[0]].x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(samples[indices[0]].x.dim(1)) * samples[indices[0]].x.dim(2);
  ChannelStats st;
  st.mean.assign(c, 0.0);
  st.std.assign(c, 0.0);
  for (std::size_t i : indices) {
    if (samples[i].x.dim(0) != c) throw DimensionError("channel stats: mixed channel counts");
  }
  const double count = static_cast<double>(indices.size() * plane);
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i : indices) {
      const float* p = samples[i].x.data().data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) sum += p[k];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i : indices) {
      const float* p = samples[i].x.data().data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - mean) * (p[k] - mean);
    }
    const double sd = std::sqrt(sq / count);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      st.degenerate.push_back(ch);
      st.mean[ch] = 0.0;
      st.std[ch] = 1.0;
      warn(fmt::format("channel {} is constant on the training split; left unstandardized", ch));
    } else {
      st.mean[ch] = mean;
      st.std[ch] = sd;
    }
  }
  return st;
}

void standardize(GridSample& s, const ChannelStats& stats) {
  const int c = s.x.dim(0);
  if (static_cast<std::size_t>(c) != stats.mean.size()) {
    throw DimensionError(fmt::format("standardize: sample has {} channels, stats cover {}", c, stats.mean.size()));
  }
  const std::size_t plane = s.x.numel() / static_cast<std::size_t>(c);
  auto x = s.x.data();
  for (int ch = 0; ch < c; ++ch) {
    const double m = stats.mean[ch];
    const double inv = 1.0 / stats.std[ch];
    for (std::size_t k = 0; k < plane; ++k) {
      float& v = x[ch * plane + k];
      v = static_cast<float>((v - m) * inv);
    }
  }
}

std::vector<GridSample> standardized(std::span<const GridSample> samples, std::span<const std::size_t> indices,
                                     const ChannelStats& stats) {
  std::vector<GridSample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back(samples[i]);
    standardize(out.back(), stats);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

double NoiseProfile::sigma_at(int col, int cols) const {
  if (kind == NoiseKind::Homoscedastic) return sigma;
  return in_east_half(col, cols) ? 2.0 * sigma : sigma;
}

std::string NoiseProfile::to_string() const {
  return fmt::format("{}:{}", kind == NoiseKind::Homoscedastic ? "homo" : "hetero", sigma);
}

NoiseProfile NoiseProfile::parse(const std::string& text) {
  NoiseProfile p;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  if (kind == "homo") {
    p.kind = NoiseKind::Homoscedastic;
    if (colon == std::string::npos) throw FormatError("noise 'homo' needs a sigma, e.g. homo:2.5");
  } else if (kind == "hetero") {
    p.kind = NoiseKind::Heteroscedastic;
    p.sigma = kDefaultHeteroSigma;
  } else {
    throw FormatError("unknown noise profile '" + text + "' (expected homo:SIGMA or hetero)");
  }
  if (colon != std::string::npos) {
    p.sigma = to_double(text.substr(colon + 1), "noise");
    if (!(p.sigma >= 0.0)) throw FormatError("noise sigma must be >= 0 in '" + text + "'");
  }
  return p;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Mask clustered_mask(int rows, int cols, double density, Rng& rng) {
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  const auto count = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(density * cells)), 1, cells);
  const int centres = std::max<int>(2, static_cast<int>(count / 6));
  const double width = std::max(1.5, 0.06 * std::max(rows, cols));
  std::uniform_real_distribution<double> ur(0.0, rows), uc(0.0, cols), u01(0.0, 1.0);
  std::vector<std::pair<double, double>> centre(centres);
  for (auto& [r, c] : centre) {
    r = ur(rng);
    c = uc(rng);
  }
  std::vector<double> score(cells);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double best = 0.0;
      for (const auto& [cr, cc] : centre) {
        const double d2 = (r + 0.5 - cr) * (r + 0.5 - cr) + (c + 0.5 - cc) * (c + 0.5 - cc);
        best = std::max(best, std::exp(-d2 / (2.0 * width * width)));
      }
      score[static_cast<std::size_t>(r) * cols + c] = best + 0.35 * u01(rng);
    }
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  Mask m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) m.cells[order[i]] = 1;
  return m;
}

}  // namespace

SyntheticTruth::SyntheticTruth(const SyntheticOptions& options) : options_(options) {
  const int rows = options.region.rows, cols = options.region.cols, c = options.channels;
  if (c != 28 && c != 51) throw ContractError(fmt::format("synthetic: channels must be 28 or 51, got {}", c));
  if (!(options.station_density > 0.0 && options.station_density <= 1.0)) {
    throw ContractError(fmt::format("synthetic: station density {} outside (0,1]", options.station_density));
  }
  if (rows < 1 || cols < 1) throw ContractError("synthetic: empty grid");
  if (options.n_days < 0) throw ContractError("synthetic: negative day count");

  Rng rng(derive_seed(options.seed, 0));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  dynamic_channels_ = 28;
  offset_.resize(c);
  scale_.resize(c);
  climatology_.assign(c, std::vector<float>(static_cast<std::size_t>(rows) * cols));
  for (int ch = 0; ch < c; ++ch) {
    // Mixed physical units: scales from 1e-2 to 1e3, offsets of a few scales.
    scale_[ch] = std::pow(10.0, -2.0 + 5.0 * u01(rng));
    offset_[ch] = scale_[ch] * (10.0 * u01(rng) - 5.0);
    auto& clim = climatology_[ch];
    if (ch == 0 || ch == 1) {
      // East-west and north-south climatological gradients.
      for (int r = 0; r < rows; ++r)
        for (int q = 0; q < cols; ++q) {
          const double t = ch == 0 ? (cols > 1 ? static_cast<double>(q) / (cols - 1) : 0.5)
                                   : (rows > 1 ? static_cast<double>(r) / (rows - 1) : 0.5);
          clim[static_cast<std::size_t>(r) * cols + q] = static_cast<float>(1.2 * (2.0 * t - 1.0));
        }
      continue;
    }
    const int waves = ch < dynamic_channels_ ? 2 : 3;
    const double amp = ch < dynamic_channels_ ? 0.5 : 0.8;
    std::vector<Wave> w(waves);
    std::vector<double> phase(waves);
    for (int k = 0; k < waves; ++k) {
      w[k] = {amp, 2.4 * u01(rng) - 1.2, 2.4 * u01(rng) - 1.2};
      phase[k] = kTwoPi * u01(rng);
    }
    for (int r = 0; r < rows; ++r)
      for (int q = 0; q < cols; ++q) {
        double v = 0.0;
        for (int k = 0; k < waves; ++k)
          v += w[k].amplitude *
               std::sin(kTwoPi * (w[k].fx * q / cols + w[k].fy * static_cast<double>(r) / rows) + phase[k]);
        clim[static_cast<std::size_t>(r) * cols + q] = static_cast<float>(v);
      }
  }
  waves_.resize(dynamic_channels_);
  for (int ch = 0; ch < dynamic_channels_; ++ch) {
    const double amp_scale = (ch == 0 || ch == 1) ? 0.3 : 1.0;
    for (int k = 0; k < 3; ++k) {
      Wave w;
      w.amplitude = amp_scale * (0.4 + 0.4 * u01(rng));
      double fx = 0.0, fy = 0.0;
      do {
        fx = 4.0 * u01(rng) - 2.0;
        fy = 4.0 * u01(rng) - 2.0;
      } while (fx * fx + fy * fy < 0.09);
      w.fx = fx;
      w.fy = fy;
      waves_[ch].push_back(w);
    }
  }
  Rng mask_rng(derive_seed(options.seed, 1));
  mask_ = clustered_mask(rows, cols, options.station_density, mask_rng);
}

Tensor SyntheticTruth::day_inputs(int day) const {
  const int rows = options_.region.rows, cols = options_.region.cols, c = options_.channels;
  Rng rng(derive_seed(options_.seed, 0x100000ULL + static_cast<std::uint64_t>(day)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Tensor x({c, rows, cols});
  auto xd = x.data();
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> phase;
    if (ch < dynamic_channels_)
      for (std::size_t k = 0; k < waves_[ch].size(); ++k) phase.push_back(kTwoPi * u01(rng));
    for (int r = 0; r < rows; ++r)
      for (int q = 0; q < cols; ++q) {
        double z = climatology_[ch][static_cast<std::size_t>(r) * cols + q];
        if (ch < dynamic_channels_) {
          for (std::size_t k = 0; k < waves_[ch].size(); ++k) {
            const Wave& w = waves_[ch][k];
            z += w.amplitude * std::sin(kTwoPi * (w.fx * q / cols + w.fy * static_cast<double>(r) / rows) + phase[k]);
          }
        }
        xd[ch * plane + static_cast<std::size_t>(r) * cols + q] = static_cast<float>(offset_[ch] + scale_[ch] * z);
      }
  }
  return x;
}

double SyntheticTruth::target_from_drivers(double z0, double z1, double z2) {
  const double s = 0.8 * z0 - 0.6 * z1 + 0.5 * z2;
  return 8.0 * std::tanh(0.6 * s) + 3.0 * s;
}

Grid SyntheticTruth::noiseless_target(const Tensor& x) const {
  const int rows = options_.region.rows, cols = options_.region.cols;
  if (x.rank() != 3 || x.dim(0) != options_.channels || x.dim(1) != rows || x.dim(2) != cols) {
    throw DimensionError("noiseless_target: x has shape " + shape_str(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  Grid y(rows, cols, Unit::Ppb);
  for (std::size_t i = 0; i < plane; ++i) {
    double z[3];
    for (int k = 0; k < 3; ++k) {
      const int ch = kDriverChannels[k];
      z[k] = (static_cast<double>(x[ch * plane + i]) - offset_[ch]) / scale_[ch];
    }
    y.values[i] = static_cast<float>(target_from_drivers(z[0], z[1], z[2]));
  }
  return y;
}

Dataset generate_synthetic(const SyntheticOptions& options) {
  const SyntheticTruth truth(options);
  const int rows = options.region.rows, cols = options.region.cols;
  Dataset d;
  d.region = options.region;
  for (int ch = 0; ch < options.channels; ++ch)
    d.channel_names.push_back(ch < 28 ? fmt::format("dyn{:02d}", ch) : fmt::format("static{:02d}", ch - 28));
  d.attributes["gen.seed"] = std::to_string(options.seed);
  d.attributes["gen.noise"] = options.noise.to_string();
  d.attributes["gen.density"] = fmt::format("{}", options.station_density);
  d.attributes["gen.start_year"] = std::to_string(options.start_year);
  const float sentinel = std::bit_cast<float>(kTargetSentinelBits);
  for (int day = 0; day < options.n_days; ++day) {
    GridSample s;
    s.date = Date{std::chrono::year(options.start_year + day / 30), std::chrono::June,
                  std::chrono::day(static_cast<unsigned>(day % 30 + 1))};
    s.x = truth.day_inputs(day);
    s.y = truth.noiseless_target(s.x);
    s.mask = truth.station_mask();
    Rng noise_rng(derive_seed(options.seed, 0x200000ULL + static_cast<std::uint64_t>(day)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < rows; ++r)
      for (int q = 0; q < cols; ++q) {
        const double eps = normal(noise_rng) * options.noise.sigma_at(q, cols);
        float& v = s.y.at(r, q);
        v = s.mask.at(r, q) ? static_cast<float>(v + eps) : sentinel;
      }
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::pair<Date, float>> station_series(const Dataset& dataset, double lat, double lon) {
  const auto cell = dataset.region.cell_of(lat, lon);
  std::vector<std::pair<Date, float>> out;
  for (const auto& s : dataset.samples)
    if (s.mask.at(cell.row, cell.col)) out.emplace_back(s.date, s.y.at(cell.row, cell.col));
  if (out.empty()) {
    warn(fmt::format("no station data at ({}, {}) -> cell ({}, {})", lat, lon, cell.row, cell.col));
  }
  return out;
}

}  // namespace griduq
