#include "griduq/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "griduq/binary_io.hpp"
#include "griduq/errors.hpp"

namespace griduq {

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, 4);
  binio::write_le<std::uint16_t>(os, kCheckpointVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw FormatError("checkpoint tensor name too long: " + name);
    if (t.rank() > 0xFF) throw FormatError("checkpoint tensor rank too large: " + name);
    binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : t.data()) binio::write_f32(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  const std::string ctx = path.string();
  char magic[4] = {};
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError(ctx + ": not a GUQW checkpoint (bad magic)");
  }
  const auto version = binio::read_le<std::uint16_t>(is, ctx);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("{}: unsupported checkpoint version {}", ctx, version));
  }
  const auto count = binio::read_le<std::uint32_t>(is, ctx);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read_le<std::uint16_t>(is, ctx);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError(ctx + ": truncated tensor name");
    const auto rank = binio::read_le<std::uint8_t>(is, ctx);
    Shape shape(rank);
    for (auto& d : shape) {
      const auto dim = binio::read_le<std::uint32_t>(is, ctx);
      if (dim > 0x7FFFFFFF) throw FormatError(fmt::format("{}: dimension {} too large in '{}'", ctx, dim, name));
      d = static_cast<int>(dim);
    }
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) v = binio::read_f32(is, ctx);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(ctx + ": trailing bytes after last tensor");
  return out;
}

}  // namespace griduq
