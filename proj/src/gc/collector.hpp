#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "common/types.hpp"
#include "heap/heap.hpp"
#include "pmem/nvm.hpp"
#include "txlog/transaction.hpp"

namespace uniheap {

struct GcReport {
  std::uint64_t live = 0;
  std::uint64_t reclaimed = 0;
  std::uint64_t log_bytes_before = 0;
  std::uint64_t log_bytes_after = 0;
  std::uint64_t checkpoint_values = 0;
  std::uint64_t epoch = 0;  // active epoch after the collection
};

/// Old id -> new id, indexed by old chunk; 0 marks a reclaimed object.
using Forwarding = std::vector<std::uint64_t>;

/// Stop-the-world mark-and-compact collector. Live headers slide to the
/// front of the inactive object space; their newest field values are
/// rewritten once each into the inactive log segment; a single epoch word
/// then switches the heap over.
///
/// Phase word protocol (each store persisted before the phase's work):
///   marking -> relocation -> compaction [data fence] -> cleanup
///   [roots fence] [epoch fence] -> idle
/// Forwarded root addresses are staged in the header during compaction so
/// cleanup can be replayed from the stage after a crash.
class Collector {
 public:
  using VrootProvider = std::function<std::vector<ObjectRef>()>;
  using RelocateCallback = std::function<void(std::span<const std::uint64_t>)>;

  Collector(Heap& heap, TxManager& txm);

  std::uint64_t register_runtime(VrootProvider vroots, RelocateCallback relocate = {});
  void unregister_runtime(std::uint64_t id);
  std::size_t runtime_count() const;

  /// Stops the world, gathers vroots from every runtime, collects.
  /// GcAlreadyRunning if another collection is in progress on this heap.
  GcReport request_gc();

  /// Collection with the world already stopped (or single-threaded, during
  /// recovery). `vroots` must be live.
  GcReport collect(const std::vector<ObjectRef>& vroots, pmem::FenceSite site);

  /// Completes an interrupted cleanup phase from the header stage area.
  /// Idempotent; safe at any point after compaction was fenced.
  void finish_cleanup(pmem::FenceSite site);

  std::uint64_t runs() const noexcept { return runs_; }

  /// Reachability closure over root table and `vroots` in the active epoch.
  std::vector<bool> mark(const std::vector<ObjectRef>& vroots) const;
  /// Sliding assignment: marked chunks get ids 1..live in ascending order.
  static Forwarding relocate(const std::vector<bool>& marks);

 private:
  void set_phase(GcPhase phase, pmem::FenceSite site);

  Heap& heap_;
  TxManager& txm_;

  std::mutex run_mu_;
  std::uint64_t runs_ = 0;
  Forwarding last_forwarding_;

  mutable std::mutex rt_mu_;
  std::uint64_t next_rt_ = 1;
  struct Runtime {
    VrootProvider vroots;
    RelocateCallback relocate;
  };
  std::map<std::uint64_t, Runtime> runtimes_;
};

}  // namespace uniheap
