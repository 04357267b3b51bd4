#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "griduq/errors.hpp"

// Little-endian primitives shared by the dataset and checkpoint formats.

namespace griduq::binio {

template <typename U>
void write_le(std::ostream& os, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const std::string& context) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(context + ": unexpected end of file");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return value;
}

inline void write_f32(std::ostream& os, float v) { write_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v)); }

inline float read_f32(std::istream& is, const std::string& context) {
  return std::bit_cast<float>(read_le<std::uint32_t>(is, context));
}

}  // namespace griduq::binio
