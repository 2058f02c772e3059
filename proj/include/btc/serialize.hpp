#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "btc/tensor.hpp"

// On-disk formats. All multi-byte integers little-endian regardless of host.
//
//   BTCT  single tensor: magic "BTCT", version u32 = 1, rank u32,
//         dims rank x u32, dtype u8 = 0 (f32), payload f32 row-major.
//   BTCA  named-tensor archive: magic "BTCA", then repeated
//         (name-length u16, name UTF-8, BTCT record) until EOF.

namespace btc {

class SerializationError : public std::runtime_error {
 public:
  explicit SerializationError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>(v >> 8)};
  write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  write_bytes(os, b, 4);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline bool read_exact(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint16_t read_u16(std::istream& is, const char* field) {
  unsigned char b[2];
  if (!read_exact(is, b, 2)) throw SerializationError(std::string("truncated ") + field);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is, const char* field) {
  unsigned char b[4];
  if (!read_exact(is, b, 4)) throw SerializationError(std::string("truncated ") + field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_tensor_record(std::ostream& os, const Tensor& t) {
  detail::write_bytes(os, "BTCT", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) detail::write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  unsigned char dtype = 0;
  detail::write_bytes(os, &dtype, 1);
  for (std::size_t i = 0; i < t.numel(); ++i) detail::write_f32(os, t[i]);
}

inline Tensor read_tensor_record(std::istream& is) {
  char magic[4];
  if (!detail::read_exact(is, magic, 4)) throw SerializationError("truncated magic");
  if (std::memcmp(magic, "BTCT", 4) != 0) throw SerializationError("bad magic (expected BTCT)");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != 1) throw SerializationError("unsupported version " + std::to_string(version));
  const std::uint32_t rank = detail::read_u32(is, "rank");
  if (rank > 4) throw SerializationError("rank " + std::to_string(rank) + " exceeds 4");
  Shape shape;
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = detail::read_u32(is, "dims");
    if (d == 0) throw SerializationError("zero dimension in dims");
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  unsigned char dtype;
  if (!detail::read_exact(is, &dtype, 1)) throw SerializationError("truncated dtype");
  if (dtype != 0) throw SerializationError("unsupported dtype " + std::to_string(dtype));
  std::vector<float> data(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    std::uint32_t bits;
    unsigned char b[4];
    if (!detail::read_exact(is, b, 4)) throw SerializationError("short payload");
    bits = 0;
    for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(b[j]) << (8 * j);
    std::memcpy(&data[i], &bits, 4);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void serialize_tensor(const Tensor& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SerializationError("cannot open for write: " + path);
  write_tensor_record(os, t);
  if (!os) throw SerializationError("write failed: " + path);
}

inline Tensor deserialize_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SerializationError("cannot open: " + path);
  try {
    return read_tensor_record(is);
  } catch (const SerializationError& e) {
    throw SerializationError(std::string(e.what()) + " in " + path);
  }
}

// Entry order is preserved, which keeps archives byte-reproducible.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void write_archive(std::ostream& os, const NamedTensors& entries) {
  detail::write_bytes(os, "BTCA", 4);
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xFFFF) throw SerializationError("entry name too long: " + name);
    detail::write_u16(os, static_cast<std::uint16_t>(name.size()));
    detail::write_bytes(os, name.data(), name.size());
    write_tensor_record(os, tensor);
  }
}

inline NamedTensors read_archive(std::istream& is) {
  char magic[4];
  if (!detail::read_exact(is, magic, 4)) throw SerializationError("truncated magic");
  if (std::memcmp(magic, "BTCA", 4) != 0) throw SerializationError("bad magic (expected BTCA)");
  NamedTensors entries;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint16_t len = detail::read_u16(is, "name length");
    std::string name(len, '\0');
    if (!detail::read_exact(is, name.data(), len)) throw SerializationError("truncated entry name");
    entries.emplace_back(std::move(name), read_tensor_record(is));
  }
  return entries;
}

inline void save_archive(const NamedTensors& entries, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SerializationError("cannot open for write: " + path);
  write_archive(os, entries);
  if (!os) throw SerializationError("write failed: " + path);
}

inline NamedTensors load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SerializationError("cannot open: " + path);
  try {
    return read_archive(is);
  } catch (const SerializationError& e) {
    throw SerializationError(std::string(e.what()) + " in " + path);
  }
}

inline const Tensor& archive_get(const NamedTensors& entries, const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw SerializationError("archive entry not found: " + name);
}

inline bool archive_has(const NamedTensors& entries, const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return true;
  return false;
}

}  // namespace btc
