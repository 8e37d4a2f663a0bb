#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "common/types.hpp"
#include "heap/layout.hpp"
#include "heap/safepoint.hpp"
#include "object/field_index.hpp"
#include "object/plass.hpp"
#include "pmem/nvm.hpp"

namespace uniheap {

/// The 16-byte on-media object header.
struct ObjectHeader {
  PlassId plass_id = 0;
  std::uint32_t lock_word = 0;  // bit 31 locked, bits 0..30 version
  std::uint32_t flags = 0;      // bit 0 is_array
  std::uint32_t reserved = 0;
};

inline constexpr std::uint32_t kLockBit = 0x80000000u;
inline constexpr std::uint32_t kVersionMask = 0x7fffffffu;
inline constexpr std::uint32_t kFlagArray = 1u;

struct RootEntry {
  std::string name;
  ObjectRef ref;
  std::size_t slot = 0;
};

/// One heap on one device: the five-region layout, header words, header-chunk
/// allocation, the valid bitmap, the root table, and the volatile indexes
/// (plass registry, object directory) that the upper layers populate.
///
/// Heap does not recover anything by itself; attach() only validates the
/// header and loads the plass region and root table.
class Heap {
 public:
  static std::unique_ptr<Heap> create(std::shared_ptr<pmem::SimulatedNvm> dev, std::string_view name,
                                      const Geometry& geometry = {}, bool force = false);
  static std::unique_ptr<Heap> attach(std::shared_ptr<pmem::SimulatedNvm> dev, bool read_only = false);

  Heap(const Heap&) = delete;
  Heap& operator=(const Heap&) = delete;

  pmem::SimulatedNvm& device() const noexcept { return *dev_; }
  const std::shared_ptr<pmem::SimulatedNvm>& device_ptr() const noexcept { return dev_; }
  const HeapLayout& layout() const noexcept { return layout_; }
  const std::string& name() const noexcept { return name_; }
  bool read_only() const noexcept { return read_only_; }

  PlassRegistry& plasses() noexcept { return plasses_; }
  const PlassRegistry& plasses() const noexcept { return plasses_; }
  ObjectDirectory& objects() noexcept { return objects_; }
  const ObjectDirectory& objects() const noexcept { return objects_; }
  SafepointGate& gate() noexcept { return gate_; }

  // Header words.
  std::uint64_t word(std::uint64_t field) const { return dev_->read_u64(field); }
  /// Atomic store, flush and fence; on a read-only heap only the volatile
  /// view changes.
  void store_word(std::uint64_t field, std::uint64_t value, pmem::FenceSite site);
  /// Flush and fence a range, skipped entirely on read-only heaps.
  void persist(std::uint64_t offset, std::uint64_t len, pmem::FenceSite site);

  std::uint64_t active_epoch() const noexcept { return epoch_; }
  /// Adopts the epoch currently stored in the header for all volatile
  /// addressing. Called after the epoch word changes.
  void reload_epoch();
  GcPhase gc_phase() const { return static_cast<GcPhase>(word(hdr::kGcPhase)); }

  Region object_space() const noexcept { return layout_.object_space(epoch_); }
  Region log_segment() const noexcept { return layout_.log_segment(epoch_); }
  Region bitmap() const noexcept { return layout_.bitmap(epoch_); }
  Region inactive_object_space() const noexcept { return layout_.object_space(epoch_ + 1); }
  Region inactive_log_segment() const noexcept { return layout_.log_segment(epoch_ + 1); }
  Region inactive_bitmap() const noexcept { return layout_.bitmap(epoch_ + 1); }
  std::uint64_t chunk_capacity() const noexcept { return layout_.chunk_capacity(); }

  /// address(id) = active object space + (id - 1) * 16.
  std::uint64_t chunk_offset(ObjectRef ref) const noexcept { return object_space().offset + ref.chunk() * kChunkBytes; }

  // Header chunks.
  /// Bump (or reuse a released chunk) and zero it. ObjectSpaceFull when none.
  ObjectRef alloc_header();
  /// Returns a reserved, never-committed chunk to the free list.
  void release_header(ObjectRef ref);
  std::uint64_t next_header_index() const;
  /// Replaces allocator state; used by recovery and GC.
  void reset_allocator(std::uint64_t next_index, std::vector<ObjectRef> free_chunks);
  ObjectHeader read_object_header(ObjectRef ref) const;
  void write_object_header(ObjectRef ref, const ObjectHeader& header);
  void write_lock_word(ObjectRef ref, std::uint32_t lock_word);

  // Valid bitmap of the active object space (media copy).
  bool bitmap_bit(ObjectRef ref) const;
  void set_bitmap_bit(ObjectRef ref, bool value);
  /// Writes the whole active bitmap from `live`; returns whether anything
  /// changed. Does not persist.
  bool write_bitmap(const std::vector<bool>& live);

  // Root table.
  std::optional<ObjectRef> get_root(std::string_view name) const;
  std::vector<RootEntry> list_roots() const;
  std::size_t root_slot_count() const noexcept { return layout_.root_slots(); }
  /// Durable root update: name (if the slot is new) then the address word,
  /// each persisted. A null ref deletes. RootTableFull / NameTooLong.
  void write_root(std::string_view name, ObjectRef ref);
  /// Raw address-word store into a slot without persisting; used by GC.
  void set_root_slot_addr(std::size_t slot, ObjectRef ref);
  /// Re-reads the root table from the device.
  void reload_roots();

  static void check_root_name(std::string_view name);

 private:
  Heap(std::shared_ptr<pmem::SimulatedNvm> dev, HeapLayout layout, bool read_only);

  std::uint64_t root_slot_offset(std::size_t slot) const noexcept {
    return layout_.region(RegionId::kRoots).offset + slot * kRootSlotBytes;
  }

  std::shared_ptr<pmem::SimulatedNvm> dev_;
  HeapLayout layout_;
  bool read_only_;
  std::string name_;
  std::uint64_t epoch_ = 0;

  PlassRegistry plasses_;
  ObjectDirectory objects_;
  SafepointGate gate_;

  mutable std::mutex alloc_mu_;
  std::uint64_t next_index_ = 0;
  std::vector<ObjectRef> free_;

  mutable std::mutex bitmap_mu_;

  mutable std::mutex roots_mu_;
  std::vector<RootEntry> roots_;  // one per slot; empty name/null ref when unused
};

}  // namespace uniheap
