#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dive/errors.hpp"

// Little-endian primitives shared by the embedding and checkpoint formats.
namespace dive::binary {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

inline void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(out, bits);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, std::streamsize(n));
  if (std::size_t(in.gcount()) != n) {
    throw TruncatedError(std::string("unexpected end of file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& in, const char* what) {
  const std::uint32_t bits = read_u32(in, what);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string read_string(std::istream& in, const char* what, std::size_t max_len = 1u << 20) {
  const std::uint32_t len = read_u32(in, what);
  if (len > max_len) throw DataError(std::string("implausible string length in ") + what);
  std::string s(len, '\0');
  if (len > 0) read_exact(in, s.data(), len, what);
  return s;
}

}  // namespace dive::binary
