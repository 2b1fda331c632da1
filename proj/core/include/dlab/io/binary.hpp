#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "dlab/errors.hpp"

// Little-endian primitives shared by the checkpoint and dataset formats.
namespace dlab::io {

template <typename U>
void write_le(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw FormatError(std::string("truncated file while reading ") + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

inline void write_f32_le(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) write_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
  }
}

inline void read_f32_le(std::istream& is, std::span<float> out, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes())))
      throw FormatError(std::string("truncated file while reading ") + what);
  } else {
    for (float& f : out) f = std::bit_cast<float>(read_le<std::uint32_t>(is, what));
  }
}

inline void expect_magic(std::istream& is, const char* magic, std::size_t len) {
  std::string got(len, '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(len)) || got != std::string(magic, len))
    throw FormatError(std::string("bad magic: expected \"") + magic + "\"");
}

}  // namespace dlab::io
