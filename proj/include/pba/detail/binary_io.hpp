#pragma once

// Little-endian fixed-width encoding, independent of host byte order.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "pba/error.hpp"

namespace pba::detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_u64(std::istream& in, const std::string& what) {
  std::array<char, 8> b{};
  if (!in.read(b.data(), 8)) throw IoError("truncated file while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_u64(in, what));
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& what) {
  std::array<char, 8> b{};
  if (!in.read(b.data(), 8) || std::string(b.data(), 8) != std::string(magic, 8))
    throw SchemaError(what + ": bad file signature");
}

}  // namespace pba::detail
