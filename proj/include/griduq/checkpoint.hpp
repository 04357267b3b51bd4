#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "griduq/tensor.hpp"

namespace griduq {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr char kCheckpointMagic[4] = {'G', 'U', 'Q', 'W'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// GUQW layout: magic, version u16, tensor count u32, then per tensor the
/// u16-prefixed UTF-8 name, rank u8, u32 dims and little-endian float32
/// payload. All integers little-endian.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace griduq
