#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "common/types.hpp"

namespace uniheap {

/// Volatile per-object map from field ordinal to the device offset of the
/// newest committed value record for that field. Zero means never written.
/// Slots are atomics so lock-free readers never see a torn offset.
class FieldIndexTable {
 public:
  FieldIndexTable(PlassId plass, std::uint32_t slots, bool is_array, std::atomic<std::uint64_t>& lookups);

  PlassId plass_id() const noexcept { return plass_; }
  std::uint32_t size() const noexcept { return size_; }
  bool is_array() const noexcept { return is_array_; }

  /// One array access; bumps the owning directory's lookup counter.
  std::uint64_t translate(std::uint32_t index) const;
  /// Uncounted read used by recovery, GC and verification.
  std::uint64_t peek(std::uint32_t index) const noexcept { return slots_[index].load(std::memory_order_acquire); }
  void set(std::uint32_t index, std::uint64_t log_offset) noexcept {
    slots_[index].store(log_offset, std::memory_order_release);
  }

 private:
  PlassId plass_;
  std::uint32_t size_;
  bool is_array_;
  std::atomic<std::uint64_t>& lookups_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> slots_;
};

/// All field index tables of the active epoch, indexed by chunk. A published
/// table doubles as the volatile "object is live" bit.
class ObjectDirectory {
 public:
  explicit ObjectDirectory(std::uint64_t capacity);

  std::uint64_t capacity() const noexcept { return capacity_; }
  FieldIndexTable* find(ObjectRef ref) const noexcept;
  bool is_live(ObjectRef ref) const noexcept { return find(ref) != nullptr; }
  FieldIndexTable& install(ObjectRef ref, PlassId plass, std::uint32_t slots, bool is_array);
  void clear();

  std::uint64_t live_count() const noexcept { return live_.load(std::memory_order_acquire); }
  std::uint64_t lookups() const noexcept { return lookups_.load(std::memory_order_relaxed); }

 private:
  std::uint64_t capacity_;
  std::vector<std::unique_ptr<FieldIndexTable>> owned_;
  std::unique_ptr<std::atomic<FieldIndexTable*>[]> published_;
  std::atomic<std::uint64_t> live_{0};
  std::atomic<std::uint64_t> lookups_{0};
};

}  // namespace uniheap
