#pragma once

#include <cstdint>
#include <bit>
#include <cstring>
#include <utility>
#include <istream>
#include <ostream>
#include <string>

namespace visfuse::io {

// Little-endian scalar encoding, independent of host byte order.

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8 || sizeof(T) == 1 || sizeof(T) == 2);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

/// Reads a 4-byte magic tag and throws IoError if it differs from `expected`.
void expect_magic(std::istream& is, const char (&expected)[5], const std::string& path);
void write_magic(std::ostream& os, const char (&magic)[5]);

}  // namespace visfuse::io
