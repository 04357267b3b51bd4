#include "fixtures.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include "griduq/errors.hpp"

namespace griduq::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          fmt::format("griduq-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_bytes(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GRIDUQ_CLI_PATH) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Dataset small_dataset(int rows, int cols, int days, const std::string& noise, double density, std::uint64_t seed,
                      int channels) {
  SyntheticOptions o;
  o.region = RegionSpec::synthetic(rows, cols);
  o.n_days = days;
  o.channels = channels;
  o.noise = NoiseProfile::parse(noise);
  o.station_density = density;
  o.seed = seed;
  return generate_synthetic(o);
}

}  // namespace griduq::testing
