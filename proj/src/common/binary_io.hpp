#pragma once

// Little-endian encode/decode helpers shared by the binary formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <string>
#include <type_traits>
#include <vector>

#include "saegraph/common.hpp"

namespace saegraph::detail {

template <typename T>
  requires std::is_trivially_copyable_v<T>
void put_le(std::vector<char>& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
T get_le(const char* data) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), data, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

/// Reads exactly n bytes or throws FormatError naming `what`.
inline void read_exact(std::istream& in, char* dst, std::size_t n, const std::string& what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(what + ": truncated");
  }
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  std::array<char, sizeof(T)> bytes;
  read_exact(in, bytes.data(), sizeof(T), what);
  return get_le<T>(bytes.data());
}

}  // namespace saegraph::detail
