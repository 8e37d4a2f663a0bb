#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gc/collector.hpp"
#include "heap/heap.hpp"
#include "object/plass.hpp"
#include "pmem/nvm.hpp"
#include "txlog/transaction.hpp"
#include "upl/lock_file.hpp"
#include "upl/recovery.hpp"

namespace uniheap {

struct HeapOptions {
  bool read_only = false;
  /// Take over a stale lock file left by a dead process.
  bool force_lock = false;
  /// Collect automatically once the active log segment passes the threshold.
  bool auto_gc = true;
  double gc_threshold = 0.75;
  CommitMode commit_mode = CommitMode::kDurable;
};

struct HeapStats {
  std::uint64_t object_count = 0;
  std::uint64_t live_count = 0;
  std::uint64_t plass_count = 0;
  std::uint64_t log_bytes_used = 0;
  std::uint64_t fence_count = 0;
  std::uint64_t active_epoch = 0;
};

/// A heap opened for use: device, heap, transaction manager, collector and
/// (for file-backed writers) the lock file. Every public operation of the
/// library is reachable from here.
class Session {
 public:
  /// Formats a new file-backed heap of `capacity` bytes.
  static std::unique_ptr<Session> create(const std::filesystem::path& path, std::uint64_t capacity,
                                         std::string_view name, const Geometry& geometry = {}, bool force = false,
                                         HeapOptions options = {});
  /// Formats `dev` (in-memory or already opened) as a new heap.
  static std::unique_ptr<Session> create_on(std::shared_ptr<pmem::SimulatedNvm> dev, std::string_view name,
                                            const Geometry& geometry = {}, bool force = false,
                                            HeapOptions options = {});
  static std::unique_ptr<Session> open(const std::filesystem::path& path, HeapOptions options = {});
  /// Attaches to `dev` and recovers.
  static std::unique_ptr<Session> open_on(std::shared_ptr<pmem::SimulatedNvm> dev, HeapOptions options = {});

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
  /// Closes quietly; errors are swallowed.
  ~Session();

  /// Persists the volatile header deltas (log tail, next header index,
  /// bitmap) and releases the lock. Nothing is written after an injected
  /// crash or on a read-only session.
  void close();
  bool closed() const noexcept { return closed_; }
  /// Ends the session the way a killed process would: nothing is written
  /// and the lock file is left behind.
  void abandon() noexcept;

  Heap& heap() noexcept { return *heap_; }
  TxManager& txm() noexcept { return *txm_; }
  Collector& collector() noexcept { return *gc_; }
  pmem::SimulatedNvm& device() noexcept { return *dev_; }
  const std::shared_ptr<pmem::SimulatedNvm>& device_ptr() const noexcept { return dev_; }
  const RecoveryReport& recovery() const noexcept { return recovery_; }
  const HeapOptions& options() const noexcept { return options_; }
  bool read_only() const noexcept { return heap_->read_only(); }

  // Language-neutral surface.
  std::unique_ptr<Transaction> atomic_begin() { return txm_->begin(); }
  Value read_field(ObjectRef ref, std::uint32_t field) { return txm_->read_field(ref, field); }
  void write_field_atomic(ObjectRef ref, std::uint32_t field, Value value) {
    txm_->write_field_atomic(ref, field, value);
  }
  void set_root(std::string_view name, ObjectRef ref) { txm_->set_root(name, ref); }
  std::optional<ObjectRef> get_root(std::string_view name) const { return heap_->get_root(name); }
  std::vector<RootEntry> list_roots() const { return heap_->list_roots(); }
  GcReport request_gc() { return gc_->request_gc(); }
  HeapStats heap_stats() const;
  std::uint64_t fence_count() const noexcept { return dev_->fence_count(); }

  // Language-related surface.
  PlassId init_plass(std::string_view name, std::span<const FieldDesc> fields);
  std::optional<PlassId> exists_plass(std::string_view name) const { return heap_->plasses().find(name); }
  const Plass* plass(PlassId id) const { return heap_->plasses().get(id); }
  /// Plass of a live object; DanglingReference otherwise.
  const Plass& plass_of(ObjectRef ref) const;
  /// Field count (or array length) of a live object.
  std::uint32_t slot_count(ObjectRef ref) const;

  std::uint64_t register_runtime(Collector::VrootProvider vroots, Collector::RelocateCallback relocate = {}) {
    return gc_->register_runtime(std::move(vroots), std::move(relocate));
  }
  void unregister_runtime(std::uint64_t id) { gc_->unregister_runtime(id); }

 private:
  Session() = default;
  static std::unique_ptr<Session> assemble(std::shared_ptr<pmem::SimulatedNvm> dev, std::unique_ptr<Heap> heap,
                                           std::unique_ptr<LockFile> lock, HeapOptions options, bool run_recovery);
  void maybe_collect();

  std::shared_ptr<pmem::SimulatedNvm> dev_;
  std::unique_ptr<Heap> heap_;
  std::unique_ptr<TxManager> txm_;
  std::unique_ptr<Collector> gc_;
  std::unique_ptr<LockFile> lock_;
  HeapOptions options_;
  RecoveryReport recovery_;
  bool closed_ = false;
};

}  // namespace uniheap
