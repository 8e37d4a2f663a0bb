#pragma once

#include <bit>
#include <cstdint>
#include <cstring>

// On-media integers are little-endian; the simulator only targets
// little-endian hosts, so encode/decode is a plain copy.
static_assert(std::endian::native == std::endian::little, "uniheap media format assumes a little-endian host");

namespace uniheap::bytes {

template <typename T>
inline T load(const std::uint8_t* p) noexcept {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void store(std::uint8_t* p, T v) noexcept {
  std::memcpy(p, &v, sizeof v);
}

constexpr std::uint64_t align_up(std::uint64_t v, std::uint64_t a) noexcept { return (v + a - 1) / a * a; }
constexpr std::uint64_t align_down(std::uint64_t v, std::uint64_t a) noexcept { return v / a * a; }

}  // namespace uniheap::bytes
