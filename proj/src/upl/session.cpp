#include "upl/session.hpp"

#include <system_error>

#include "common/error.hpp"

namespace uniheap {

using pmem::FenceSite;

std::unique_ptr<Session> Session::assemble(std::shared_ptr<pmem::SimulatedNvm> dev, std::unique_ptr<Heap> heap,
                                           std::unique_ptr<LockFile> lock, HeapOptions options, bool run_recovery) {
  std::unique_ptr<Session> s(new Session());
  s->dev_ = std::move(dev);
  s->heap_ = std::move(heap);
  s->txm_ = std::make_unique<TxManager>(*s->heap_);
  s->gc_ = std::make_unique<Collector>(*s->heap_, *s->txm_);
  s->lock_ = std::move(lock);
  s->options_ = options;
  s->txm_->set_commit_mode(options.commit_mode);
  if (run_recovery) {
    s->recovery_ = recover(*s->heap_, *s->txm_, *s->gc_);
  } else {
    s->txm_->reset_locks();
  }
  if (options.auto_gc && !s->heap_->read_only()) s->txm_->set_commit_hook([raw = s.get()] { raw->maybe_collect(); });
  return s;
}

std::unique_ptr<Session> Session::create(const std::filesystem::path& path, std::uint64_t capacity,
                                         std::string_view name, const Geometry& geometry, bool force,
                                         HeapOptions options) {
  if (options.read_only) fail(ErrorCode::kReadOnly, "cannot create a heap read-only");
  auto lock = LockFile::acquire(path, options.force_lock);
  std::error_code ec;
  if (!force && std::filesystem::is_regular_file(path, ec)) {
    bool formatted = false;
    try {
      auto existing = pmem::SimulatedNvm::open(path, true);
      formatted = existing->capacity() >= 8 && existing->read_u64(hdr::kMagic) == kHeapMagic;
    } catch (const Error&) {
      // Unreadable or oddly sized: not a heap, so it may be overwritten.
    }
    if (formatted) fail(ErrorCode::kAlreadyFormatted, path.string() + " already holds a heap");
  }
  // Refuse bad arguments before the file is truncated.
  if (capacity == 0 || capacity % pmem::kLineSize != 0)
    fail(ErrorCode::kInvalidCapacity, "capacity must be a positive multiple of 64");
  if (name.empty()) fail(ErrorCode::kInvalidArgument, "heap name must be non-empty");
  if (name.size() >= kHeapNameBytes) fail(ErrorCode::kNameTooLong, "heap name exceeds 31 bytes");
  HeapLayout::compute(capacity, geometry);
  auto dev = pmem::SimulatedNvm::create(path, capacity);
  auto heap = Heap::create(dev, name, geometry, true);
  return assemble(std::move(dev), std::move(heap), std::move(lock), options, false);
}

std::unique_ptr<Session> Session::create_on(std::shared_ptr<pmem::SimulatedNvm> dev, std::string_view name,
                                            const Geometry& geometry, bool force, HeapOptions options) {
  auto heap = Heap::create(dev, name, geometry, force);
  return assemble(std::move(dev), std::move(heap), nullptr, options, false);
}

std::unique_ptr<Session> Session::open(const std::filesystem::path& path, HeapOptions options) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(ErrorCode::kNotAHeap, path.string() + " is not a heap file");
  std::unique_ptr<LockFile> lock;
  if (!options.read_only) lock = LockFile::acquire(path, options.force_lock);
  std::shared_ptr<pmem::SimulatedNvm> dev;
  try {
    dev = pmem::SimulatedNvm::open(path, options.read_only);
  } catch (const Error& e) {
    // A file no device could have produced.
    if (e.code() == ErrorCode::kInvalidCapacity) fail(ErrorCode::kNotAHeap, path.string() + " is not a heap file");
    throw;
  }
  auto heap = Heap::attach(dev, options.read_only);
  return assemble(std::move(dev), std::move(heap), std::move(lock), options, true);
}

std::unique_ptr<Session> Session::open_on(std::shared_ptr<pmem::SimulatedNvm> dev, HeapOptions options) {
  auto heap = Heap::attach(dev, options.read_only);
  return assemble(std::move(dev), std::move(heap), nullptr, options, true);
}

Session::~Session() {
  try {
    close();
  } catch (...) {
  }
}

void Session::close() {
  if (closed_) return;
  closed_ = true;
  if (!heap_->read_only() && !dev_->halted()) {
    dev_->atomic_write_u64(hdr::kLogTail, txm_->log_tail());
    dev_->atomic_write_u64(hdr::kNextHeaderIndex, heap_->next_header_index());
    std::vector<bool> live(heap_->chunk_capacity(), false);
    for (std::uint64_t id = 1; id <= heap_->next_header_index(); ++id)
      live[id - 1] = heap_->objects().is_live(ObjectRef{id});
    heap_->write_bitmap(live);
    dev_->flush_range(hdr::kActiveEpoch, 64);
    dev_->flush_range(heap_->bitmap().offset, heap_->bitmap().length);
    dev_->fence(FenceSite::kHeader);
  }
  lock_.reset();
}

void Session::abandon() noexcept {
  closed_ = true;
  if (lock_) lock_->disown();
  lock_.reset();
}

HeapStats Session::heap_stats() const {
  HeapStats s;
  s.object_count = heap_->next_header_index();
  s.live_count = heap_->objects().live_count();
  s.plass_count = heap_->plasses().count();
  s.log_bytes_used = txm_->log_tail();
  s.fence_count = dev_->fence_count();
  s.active_epoch = heap_->active_epoch();
  return s;
}

PlassId Session::init_plass(std::string_view name, std::span<const FieldDesc> fields) {
  if (auto id = heap_->plasses().find(name); !id && heap_->read_only())
    fail(ErrorCode::kReadOnly, "heap opened read-only");
  return heap_->plasses().init(name, fields);
}

const Plass& Session::plass_of(ObjectRef ref) const {
  const auto* table = heap_->objects().find(ref);
  if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
  return *heap_->plasses().get(table->plass_id());
}

std::uint32_t Session::slot_count(ObjectRef ref) const {
  const auto* table = heap_->objects().find(ref);
  if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
  return table->size();
}

void Session::maybe_collect() {
  const auto cap = txm_->log_capacity();
  if (cap == 0 || static_cast<double>(txm_->log_tail()) < options_.gc_threshold * static_cast<double>(cap)) return;
  try {
    gc_->request_gc();
  } catch (const CrashInjected&) {
    throw;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kGcAlreadyRunning && e.code() != ErrorCode::kNestedTransaction &&
        e.code() != ErrorCode::kLogFull)
      throw;
  }
}

}  // namespace uniheap
