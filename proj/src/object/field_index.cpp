#include "object/field_index.hpp"

#include <string>

#include "common/error.hpp"

namespace uniheap {

FieldIndexTable::FieldIndexTable(PlassId plass, std::uint32_t slots, bool is_array,
                                 std::atomic<std::uint64_t>& lookups)
    : plass_(plass),
      size_(slots),
      is_array_(is_array),
      lookups_(lookups),
      slots_(std::make_unique<std::atomic<std::uint64_t>[]>(slots)) {}

std::uint64_t FieldIndexTable::translate(std::uint32_t index) const {
  if (index >= size_)
    fail(ErrorCode::kIndexOutOfRange, "field " + std::to_string(index) + " of " + std::to_string(size_));
  lookups_.fetch_add(1, std::memory_order_relaxed);
  return slots_[index].load(std::memory_order_acquire);
}

ObjectDirectory::ObjectDirectory(std::uint64_t capacity)
    : capacity_(capacity), owned_(capacity), published_(std::make_unique<std::atomic<FieldIndexTable*>[]>(capacity)) {}

FieldIndexTable* ObjectDirectory::find(ObjectRef ref) const noexcept {
  if (ref.is_null() || ref.id > capacity_) return nullptr;
  return published_[ref.chunk()].load(std::memory_order_acquire);
}

FieldIndexTable& ObjectDirectory::install(ObjectRef ref, PlassId plass, std::uint32_t slots, bool is_array) {
  if (ref.is_null() || ref.id > capacity_) fail(ErrorCode::kOutOfBounds, "object id " + std::to_string(ref.id));
  auto& owner = owned_[ref.chunk()];
  const bool fresh = owner == nullptr;
  owner = std::make_unique<FieldIndexTable>(plass, slots, is_array, lookups_);
  published_[ref.chunk()].store(owner.get(), std::memory_order_release);
  if (fresh) live_.fetch_add(1, std::memory_order_acq_rel);
  return *owner;
}

void ObjectDirectory::clear() {
  for (std::uint64_t i = 0; i < capacity_; ++i) {
    published_[i].store(nullptr, std::memory_order_release);
    owned_[i].reset();
  }
  live_.store(0, std::memory_order_release);
}

}  // namespace uniheap
