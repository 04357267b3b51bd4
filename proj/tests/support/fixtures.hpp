#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "griduq/data.hpp"

namespace griduq::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_bytes(const std::filesystem::path& file);

/// Runs the CLI with `args` (already quoted), returns the exit status.
int run_cli(const std::string& args);

/// Small synthetic dataset on a rows x cols grid.
Dataset small_dataset(int rows, int cols, int days, const std::string& noise, double density, std::uint64_t seed,
                      int channels = 28);

}  // namespace griduq::testing
