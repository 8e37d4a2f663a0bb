#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "common/types.hpp"

namespace uniheap {

inline constexpr std::uint64_t kHeapMagic = 0x0050414548494e55ULL;  // "UNIHEAP\0" little-endian
inline constexpr std::uint32_t kHeapVersion = 1;
inline constexpr std::uint64_t kHeaderRegionBytes = 4096;
inline constexpr std::uint64_t kHeapNameBytes = 32;
inline constexpr std::uint64_t kChunkBytes = 16;
inline constexpr std::uint64_t kRootSlotBytes = 32;
inline constexpr std::uint64_t kRootNameBytes = 24;
inline constexpr std::uint64_t kMaxRootSlots = 256;

/// Byte offsets of header fields. Every mutable field is an aligned 64-bit
/// word changed only by atomic store + flush + fence.
namespace hdr {
inline constexpr std::uint64_t kMagic = 0;
inline constexpr std::uint64_t kVersion = 8;            // u32
inline constexpr std::uint64_t kName = 16;              // 32 bytes, NUL-padded
inline constexpr std::uint64_t kHeapSize = 48;
inline constexpr std::uint64_t kRegionTable = 56;       // 8 x {offset u64, length u64}
inline constexpr std::uint64_t kActiveEpoch = 184;
inline constexpr std::uint64_t kGcPhase = 192;
inline constexpr std::uint64_t kNextHeaderIndex = 200;
inline constexpr std::uint64_t kNextPlassOffset = 208;  // bytes of the plass region in use
inline constexpr std::uint64_t kLogTail = 216;          // segment-relative, written at close
inline constexpr std::uint64_t kGcSourceEpoch = 224;    // epoch a running GC started from
inline constexpr std::uint64_t kTxIdBase = 232;         // tx ids issued before the last GC
inline constexpr std::uint64_t kGcRootStage = 2048;     // kMaxRootSlots forwarded root addrs
}  // namespace hdr

enum class RegionId : std::uint8_t {
  kPlass = 0,
  kRoots = 1,
  kObjectA = 2,
  kObjectB = 3,
  kLogA = 4,
  kLogB = 5,
  kBitmapA = 6,
  kBitmapB = 7,
};
inline constexpr std::size_t kRegionCount = 8;

std::string_view region_name(RegionId id) noexcept;

enum class GcPhase : std::uint64_t { kIdle = 0, kMarking = 1, kRelocation = 2, kCompaction = 3, kCleanup = 4 };

std::string_view gc_phase_name(GcPhase phase) noexcept;

/// Region sizes requested at creation. Zero means "derive": each object space
/// gets 1/8 of what remains after the fixed regions, each log segment the
/// rest split in two (about 3/8 each), bitmaps sized to the object spaces.
struct Geometry {
  std::uint64_t plass_bytes = 256 * 1024;
  std::uint64_t root_bytes = 4 * 1024;
  std::uint64_t object_space_bytes = 0;
  std::uint64_t log_segment_bytes = 0;
};

struct HeapLayout {
  std::uint64_t heap_size = 0;
  std::array<Region, kRegionCount> regions{};

  const Region& region(RegionId id) const noexcept { return regions[static_cast<std::size_t>(id)]; }
  Region& region(RegionId id) noexcept { return regions[static_cast<std::size_t>(id)]; }

  /// Active-side regions select by epoch parity: even -> A, odd -> B.
  const Region& object_space(std::uint64_t epoch) const noexcept {
    return region(epoch % 2 == 0 ? RegionId::kObjectA : RegionId::kObjectB);
  }
  const Region& log_segment(std::uint64_t epoch) const noexcept {
    return region(epoch % 2 == 0 ? RegionId::kLogA : RegionId::kLogB);
  }
  const Region& bitmap(std::uint64_t epoch) const noexcept {
    return region(epoch % 2 == 0 ? RegionId::kBitmapA : RegionId::kBitmapB);
  }
  std::uint64_t chunk_capacity() const noexcept { return region(RegionId::kObjectA).length / kChunkBytes; }
  std::uint64_t root_slots() const noexcept { return region(RegionId::kRoots).length / kRootSlotBytes; }

  /// Throws GeometryTooLarge when `geometry` does not fit `capacity`.
  static HeapLayout compute(std::uint64_t capacity, const Geometry& geometry);
  /// Structural check of a layout read back from media: every region inside
  /// the heap, past the header, pairwise disjoint, paired regions equal.
  /// Returns an empty string when sound, else a description.
  std::string validate() const;
};

}  // namespace uniheap
