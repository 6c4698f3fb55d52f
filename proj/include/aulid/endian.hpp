#pragma once

#include <cstdint>
#include <cstring>
#include <span>

// Fixed-width little-endian encoding, independent of host byte order.
namespace aulid::le {

inline void put_u16(std::span<std::uint8_t> out, std::size_t off, std::uint16_t v) {
  out[off] = static_cast<std::uint8_t>(v);
  out[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

inline void put_u32(std::span<std::uint8_t> out, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void put_u64(std::span<std::uint8_t> out, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void put_f64(std::span<std::uint8_t> out, std::size_t off, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, off, bits);
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t off) {
  return static_cast<std::uint16_t>(in[off] | (in[off + 1] << 8));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[off + i]) << (8 * i);
  return v;
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint64_t bits = get_u64(in, off);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace aulid::le
