#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tsfn/tensor.hpp"

namespace tsfn {

// Binary tensor format: magic "TSR1", rank (u32 LE), extents (u32 LE each),
// then the values as little-endian 64-bit floats in row-major order.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("unexpected end of stream reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("unexpected end of stream reading f64");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("TSR1", 4);
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
  for (double v : t.values()) write_f64(os, v);
  if (!os) throw IoError("tensor write failed");
}

inline Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TSR1") throw IoError("bad tensor magic, expected TSR1");
  const std::uint32_t rank = read_u32(is);
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = read_u32(is);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = read_f64(is);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace tsfn
