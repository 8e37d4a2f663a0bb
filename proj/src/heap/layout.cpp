#include "heap/layout.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "common/bytes.hpp"
#include "common/error.hpp"

namespace uniheap {

std::string_view region_name(RegionId id) noexcept {
  switch (id) {
    case RegionId::kPlass: return "plass";
    case RegionId::kRoots: return "roots";
    case RegionId::kObjectA: return "object_a";
    case RegionId::kObjectB: return "object_b";
    case RegionId::kLogA: return "log_a";
    case RegionId::kLogB: return "log_b";
    case RegionId::kBitmapA: return "bitmap_a";
    case RegionId::kBitmapB: return "bitmap_b";
  }
  return "?";
}

std::string_view gc_phase_name(GcPhase phase) noexcept {
  switch (phase) {
    case GcPhase::kIdle: return "idle";
    case GcPhase::kMarking: return "marking";
    case GcPhase::kRelocation: return "relocation";
    case GcPhase::kCompaction: return "compaction";
    case GcPhase::kCleanup: return "cleanup";
  }
  return "?";
}

HeapLayout HeapLayout::compute(std::uint64_t capacity, const Geometry& g) {
  using bytes::align_down;
  using bytes::align_up;
  auto too_large = [&](const std::string& why) { fail(ErrorCode::kGeometryTooLarge, why + " (device " + std::to_string(capacity) + " bytes)"); };

  if (g.root_bytes == 0 || g.root_bytes % kRootSlotBytes != 0 || g.root_bytes / kRootSlotBytes > kMaxRootSlots)
    fail(ErrorCode::kInvalidArgument, "root table must hold 1.." + std::to_string(kMaxRootSlots) + " 32-byte slots");
  if (g.plass_bytes == 0) fail(ErrorCode::kInvalidArgument, "plass region must be non-empty");

  HeapLayout layout;
  layout.heap_size = capacity;
  std::uint64_t pos = kHeaderRegionBytes;
  auto place = [&](RegionId id, std::uint64_t len) {
    pos = align_up(pos, 64);
    layout.region(id) = Region{pos, len};
    pos += len;
  };
  place(RegionId::kPlass, align_up(g.plass_bytes, 64));
  place(RegionId::kRoots, g.root_bytes);
  pos = align_up(pos, 64);
  if (pos >= capacity) too_large("fixed regions exceed the device");
  const auto remaining = capacity - pos;

  auto object_bytes = g.object_space_bytes != 0 ? align_up(g.object_space_bytes, kChunkBytes) : align_down(remaining / 8, 64);
  if (object_bytes < kChunkBytes) too_large("object space smaller than one chunk");
  const auto bitmap_bytes = align_up((object_bytes / kChunkBytes + 7) / 8, 64);
  const auto fixed = 2 * align_up(object_bytes, 64) + 2 * bitmap_bytes;
  if (fixed >= remaining) too_large("object spaces and bitmaps exceed the device");
  auto log_bytes = g.log_segment_bytes != 0 ? align_up(g.log_segment_bytes, 64) : align_down((remaining - fixed) / 2, 64);
  if (log_bytes < 64) too_large("log segment smaller than one line");

  place(RegionId::kBitmapA, bitmap_bytes);
  place(RegionId::kBitmapB, bitmap_bytes);
  place(RegionId::kObjectA, object_bytes);
  place(RegionId::kObjectB, object_bytes);
  place(RegionId::kLogA, log_bytes);
  place(RegionId::kLogB, log_bytes);
  if (pos > capacity) too_large("requested geometry needs " + std::to_string(pos) + " bytes");
  return layout;
}

std::string HeapLayout::validate() const {
  std::vector<std::pair<Region, RegionId>> sorted;
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto id = static_cast<RegionId>(i);
    const auto& r = regions[i];
    if (r.length == 0) return std::string(region_name(id)) + " is empty";
    if (r.offset < kHeaderRegionBytes || r.offset > heap_size || r.length > heap_size - r.offset)
      return std::string(region_name(id)) + " lies outside the heap";
    sorted.emplace_back(r, id);
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first.offset < b.first.offset; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i - 1].first.end() > sorted[i].first.offset)
      return std::string(region_name(sorted[i - 1].second)) + " overlaps " + std::string(region_name(sorted[i].second));
  if (region(RegionId::kObjectA).length != region(RegionId::kObjectB).length ||
      region(RegionId::kLogA).length != region(RegionId::kLogB).length ||
      region(RegionId::kBitmapA).length != region(RegionId::kBitmapB).length)
    return "paired regions differ in size";
  if (region(RegionId::kObjectA).length % kChunkBytes != 0) return "object space is not a whole number of chunks";
  if (region(RegionId::kBitmapA).length * 8 < chunk_capacity()) return "bitmap too small for object space";
  if (region(RegionId::kRoots).length % kRootSlotBytes != 0 || root_slots() > kMaxRootSlots)
    return "root table size invalid";
  return {};
}

}  // namespace uniheap
