#include "heap/heap.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "common/bytes.hpp"
#include "common/error.hpp"

namespace uniheap {

using pmem::FenceSite;

namespace {

std::string read_name(const pmem::SimulatedNvm& dev, std::uint64_t offset, std::size_t max) {
  std::string out(max, '\0');
  dev.read(offset, {reinterpret_cast<std::uint8_t*>(out.data()), max});
  out.resize(std::strlen(out.c_str()));
  return out;
}

HeapLayout read_layout(const pmem::SimulatedNvm& dev) {
  HeapLayout layout;
  layout.heap_size = dev.read_u64(hdr::kHeapSize);
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    layout.regions[i].offset = dev.read_u64(hdr::kRegionTable + i * 16);
    layout.regions[i].length = dev.read_u64(hdr::kRegionTable + i * 16 + 8);
  }
  return layout;
}

}  // namespace

Heap::Heap(std::shared_ptr<pmem::SimulatedNvm> dev, HeapLayout layout, bool read_only)
    : dev_(std::move(dev)),
      layout_(layout),
      read_only_(read_only),
      plasses_(*dev_, layout_.region(RegionId::kPlass), hdr::kNextPlassOffset, read_only),
      objects_(layout_.chunk_capacity()),
      roots_(layout_.root_slots()) {}

std::unique_ptr<Heap> Heap::create(std::shared_ptr<pmem::SimulatedNvm> dev, std::string_view name,
                                   const Geometry& geometry, bool force) {
  if (name.empty()) fail(ErrorCode::kInvalidArgument, "heap name must be non-empty");
  if (name.size() >= kHeapNameBytes) fail(ErrorCode::kNameTooLong, "heap name exceeds 31 bytes");
  if (dev->read_only()) fail(ErrorCode::kReadOnly, "device opened read-only");
  const auto layout = HeapLayout::compute(dev->capacity(), geometry);
  if (dev->read_u64(hdr::kMagic) == kHeapMagic && !force)
    fail(ErrorCode::kAlreadyFormatted, "device already holds a heap");

  // Zero everything (including any old magic) and persist before the new
  // header goes down, so a crash leaves either the old state or no heap.
  std::uint64_t end = kHeaderRegionBytes;
  for (const auto& r : layout.regions) end = std::max(end, r.end());
  dev->zero_range(0, end);
  dev->flush_range(0, end);
  dev->fence(FenceSite::kCreate);

  dev->write_u32(hdr::kVersion, kHeapVersion);
  std::array<std::uint8_t, kHeapNameBytes> name_bytes{};
  std::memcpy(name_bytes.data(), name.data(), name.size());
  dev->write(hdr::kName, name_bytes);
  dev->write_u64(hdr::kHeapSize, layout.heap_size);
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    dev->write_u64(hdr::kRegionTable + i * 16, layout.regions[i].offset);
    dev->write_u64(hdr::kRegionTable + i * 16 + 8, layout.regions[i].length);
  }
  dev->flush_range(0, kHeaderRegionBytes);
  dev->fence(FenceSite::kCreate);

  dev->atomic_write_u64(hdr::kMagic, kHeapMagic);
  dev->flush_range(hdr::kMagic, 8);
  dev->fence(FenceSite::kCreate);

  return attach(std::move(dev), false);
}

std::unique_ptr<Heap> Heap::attach(std::shared_ptr<pmem::SimulatedNvm> dev, bool read_only) {
  if (dev->capacity() < kHeaderRegionBytes || dev->read_u64(hdr::kMagic) != kHeapMagic)
    fail(ErrorCode::kNotAHeap, "heap magic not found");
  const auto version = dev->read_u32(hdr::kVersion);
  if (version != kHeapVersion)
    fail(ErrorCode::kVersionMismatch, "heap version " + std::to_string(version) + ", expected " +
                                          std::to_string(kHeapVersion));
  const auto layout = read_layout(*dev);
  if (layout.heap_size > dev->capacity()) fail(ErrorCode::kCorruptHeader, "heap size exceeds device");
  if (auto why = layout.validate(); !why.empty()) fail(ErrorCode::kCorruptHeader, why);
  if (dev->read_u64(hdr::kGcPhase) > static_cast<std::uint64_t>(GcPhase::kCleanup))
    fail(ErrorCode::kCorruptHeader, "unknown gc phase");
  if (dev->read_u64(hdr::kNextHeaderIndex) > layout.chunk_capacity())
    fail(ErrorCode::kCorruptHeader, "next header index beyond object space");

  std::unique_ptr<Heap> heap(new Heap(dev, layout, read_only || dev->read_only()));
  heap->name_ = read_name(*dev, hdr::kName, kHeapNameBytes);
  heap->epoch_ = dev->read_u64(hdr::kActiveEpoch);
  heap->next_index_ = dev->read_u64(hdr::kNextHeaderIndex);
  heap->plasses_.load();
  heap->reload_roots();
  return heap;
}

void Heap::store_word(std::uint64_t field, std::uint64_t value, FenceSite site) {
  dev_->atomic_write_u64(field, value);
  persist(field, 8, site);
}

void Heap::persist(std::uint64_t offset, std::uint64_t len, FenceSite site) {
  if (read_only_) return;
  dev_->flush_range(offset, len);
  dev_->fence(site);
}

void Heap::reload_epoch() { epoch_ = dev_->read_u64(hdr::kActiveEpoch); }

ObjectRef Heap::alloc_header() {
  std::lock_guard lock(alloc_mu_);
  ObjectRef ref;
  if (!free_.empty()) {
    ref = free_.back();
    free_.pop_back();
  } else {
    if (next_index_ >= chunk_capacity())
      fail(ErrorCode::kObjectSpaceFull, "object space full at " + std::to_string(next_index_) + " chunks");
    ref = ObjectRef{++next_index_};
  }
  dev_->zero_range(chunk_offset(ref), kChunkBytes);
  return ref;
}

void Heap::release_header(ObjectRef ref) {
  std::lock_guard lock(alloc_mu_);
  dev_->zero_range(chunk_offset(ref), kChunkBytes);
  free_.push_back(ref);
  // Prefer the lowest released chunk next.
  std::sort(free_.begin(), free_.end(), [](ObjectRef a, ObjectRef b) { return a > b; });
}

std::uint64_t Heap::next_header_index() const {
  std::lock_guard lock(alloc_mu_);
  return next_index_;
}

void Heap::reset_allocator(std::uint64_t next_index, std::vector<ObjectRef> free_chunks) {
  std::lock_guard lock(alloc_mu_);
  next_index_ = next_index;
  free_ = std::move(free_chunks);
  std::sort(free_.begin(), free_.end(), [](ObjectRef a, ObjectRef b) { return a > b; });
}

ObjectHeader Heap::read_object_header(ObjectRef ref) const {
  std::array<std::uint8_t, kChunkBytes> raw{};
  dev_->read(chunk_offset(ref), raw);
  ObjectHeader h;
  h.plass_id = bytes::load<std::uint32_t>(raw.data());
  h.lock_word = bytes::load<std::uint32_t>(raw.data() + 4);
  h.flags = bytes::load<std::uint32_t>(raw.data() + 8);
  h.reserved = bytes::load<std::uint32_t>(raw.data() + 12);
  return h;
}

void Heap::write_object_header(ObjectRef ref, const ObjectHeader& header) {
  std::array<std::uint8_t, kChunkBytes> raw{};
  bytes::store(raw.data(), header.plass_id);
  bytes::store(raw.data() + 4, header.lock_word);
  bytes::store(raw.data() + 8, header.flags);
  bytes::store(raw.data() + 12, header.reserved);
  dev_->write(chunk_offset(ref), raw);
}

void Heap::write_lock_word(ObjectRef ref, std::uint32_t lock_word) { dev_->write_u32(chunk_offset(ref) + 4, lock_word); }

bool Heap::bitmap_bit(ObjectRef ref) const {
  if (ref.is_null() || ref.id > chunk_capacity()) return false;
  std::uint8_t byte = 0;
  dev_->read(bitmap().offset + ref.chunk() / 8, {&byte, 1});
  return (byte >> (ref.chunk() % 8)) & 1u;
}

void Heap::set_bitmap_bit(ObjectRef ref, bool value) {
  std::lock_guard lock(bitmap_mu_);
  const auto at = bitmap().offset + ref.chunk() / 8;
  std::uint8_t byte = 0;
  dev_->read(at, {&byte, 1});
  const auto mask = static_cast<std::uint8_t>(1u << (ref.chunk() % 8));
  const auto next = static_cast<std::uint8_t>(value ? (byte | mask) : (byte & ~mask));
  if (next != byte) dev_->write(at, {&next, 1});
}

bool Heap::write_bitmap(const std::vector<bool>& live) {
  std::lock_guard lock(bitmap_mu_);
  const auto region = bitmap();
  std::vector<std::uint8_t> want(region.length, 0);
  for (std::size_t i = 0; i < live.size() && i / 8 < want.size(); ++i)
    if (live[i]) want[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  std::vector<std::uint8_t> have(region.length);
  dev_->read(region.offset, have);
  if (have == want) return false;
  dev_->write(region.offset, want);
  return true;
}

void Heap::check_root_name(std::string_view name) {
  if (name.empty()) fail(ErrorCode::kInvalidArgument, "root name must be non-empty");
  if (name.size() >= kRootNameBytes) fail(ErrorCode::kNameTooLong, "root name exceeds 23 bytes");
  if (name.find('\0') != std::string_view::npos) fail(ErrorCode::kInvalidArgument, "root name contains NUL");
}

void Heap::reload_roots() {
  std::lock_guard lock(roots_mu_);
  for (std::size_t slot = 0; slot < roots_.size(); ++slot) {
    const auto off = root_slot_offset(slot);
    roots_[slot].slot = slot;
    roots_[slot].name = read_name(*dev_, off, kRootNameBytes - 1);
    roots_[slot].ref = ObjectRef{dev_->read_u64(off + kRootNameBytes)};
  }
}

std::optional<ObjectRef> Heap::get_root(std::string_view name) const {
  std::lock_guard lock(roots_mu_);
  for (const auto& r : roots_)
    if (!r.ref.is_null() && r.name == name) return r.ref;
  return std::nullopt;
}

std::vector<RootEntry> Heap::list_roots() const {
  std::lock_guard lock(roots_mu_);
  std::vector<RootEntry> out;
  for (const auto& r : roots_)
    if (!r.ref.is_null()) out.push_back(r);
  return out;
}

void Heap::write_root(std::string_view name, ObjectRef ref) {
  check_root_name(name);
  std::lock_guard lock(roots_mu_);
  // A slot with a name but a null address is free; it is reused for that
  // name first so that repeated set/delete cycles need no name rewrite.
  std::optional<std::size_t> named, empty;
  for (std::size_t slot = 0; slot < roots_.size(); ++slot) {
    if (roots_[slot].name == name && !named) named = slot;
    if (roots_[slot].ref.is_null() && !empty) empty = slot;
  }
  if (ref.is_null()) {
    if (!named || roots_[*named].ref.is_null()) return;
    store_word(root_slot_offset(*named) + kRootNameBytes, 0, FenceSite::kRoot);
    roots_[*named].ref = kNullRef;
    return;
  }
  std::size_t slot;
  if (named) {
    slot = *named;
  } else {
    if (!empty) fail(ErrorCode::kRootTableFull, "all " + std::to_string(roots_.size()) + " root slots in use");
    slot = *empty;
    std::array<std::uint8_t, kRootNameBytes> raw{};
    std::memcpy(raw.data(), name.data(), name.size());
    dev_->write(root_slot_offset(slot), raw);
    persist(root_slot_offset(slot), kRootNameBytes, FenceSite::kRoot);
    roots_[slot].name = std::string(name);
  }
  store_word(root_slot_offset(slot) + kRootNameBytes, ref.id, FenceSite::kRoot);
  roots_[slot].ref = ref;
}

void Heap::set_root_slot_addr(std::size_t slot, ObjectRef ref) {
  dev_->atomic_write_u64(root_slot_offset(slot) + kRootNameBytes, ref.id);
  std::lock_guard lock(roots_mu_);
  roots_[slot].ref = ref;
}

}  // namespace uniheap
