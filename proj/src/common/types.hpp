#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace uniheap {

/// Reference to a persistent object: 1 + chunk index in the active object
/// space. Stable within an epoch; remapped by GC forwarding. Zero is null.
struct ObjectRef {
  std::uint64_t id = 0;

  constexpr bool is_null() const noexcept { return id == 0; }
  constexpr std::uint64_t chunk() const noexcept { return id - 1; }
  friend constexpr auto operator<=>(const ObjectRef&, const ObjectRef&) = default;
};

inline constexpr ObjectRef kNullRef{};

/// Persistent class descriptor id; 1-based, 0 reserved.
using PlassId = std::uint32_t;

/// A byte range on the device.
struct Region {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  constexpr std::uint64_t end() const noexcept { return offset + length; }
  constexpr bool contains(std::uint64_t pos, std::uint64_t len = 1) const noexcept {
    return pos >= offset && len <= length && pos - offset <= length - len;
  }
  friend constexpr bool operator==(const Region&, const Region&) = default;
};

}  // namespace uniheap

template <>
struct std::hash<uniheap::ObjectRef> {
  std::size_t operator()(const uniheap::ObjectRef& ref) const noexcept { return std::hash<std::uint64_t>{}(ref.id); }
};
