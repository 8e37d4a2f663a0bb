#pragma once

#include <cstdint>

#include "gc/collector.hpp"
#include "heap/heap.hpp"
#include "txlog/transaction.hpp"

namespace uniheap {

struct RecoveryReport {
  std::uint64_t replayed_txs = 0;
  std::uint64_t discarded_entries = 0;  // uncommitted entries plus a torn tail slot
  std::uint64_t scanned_entries = 0;
  bool torn_tail = false;
  bool cleanup_completed = false;
  bool gc_redone = false;
};

/// Rebuilds all volatile state of a freshly attached heap from its media:
/// finishes an interrupted cleanup, replays the active log segment, clears
/// lock bits, and redoes a collection that never reached its epoch flip.
/// On a read-only heap every repair stays in the volatile view.
RecoveryReport recover(Heap& heap, TxManager& txm, Collector& gc);

}  // namespace uniheap
