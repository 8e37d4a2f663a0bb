#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "common/types.hpp"
#include "heap/heap.hpp"
#include "object/unitype.hpp"
#include "txlog/log_entry.hpp"

namespace uniheap {

enum class CommitResult { kCommitted, kConflictRetry };

/// kDurable is the two-fence redo protocol. kPerWrite persists every log
/// record (and its publication) on its own before the COMMIT record; it
/// exists only as the per-write fencing reference point for benchmarks.
enum class CommitMode { kDurable, kPerWrite };

class TxManager;

class Transaction {
 public:
  enum class State { kActive, kCommitting, kCommitted, kAborted };

  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;
  /// An active transaction is aborted.
  ~Transaction();

  std::uint64_t id() const noexcept { return id_; }
  State state() const noexcept { return state_; }
  bool active() const noexcept { return state_ == State::kActive; }

  Value read(ObjectRef ref, std::uint32_t field);
  void write(ObjectRef ref, std::uint32_t field, Value value);
  ObjectRef alloc(PlassId plass, std::optional<std::uint64_t> array_length = std::nullopt);
  /// Root update applied right after this transaction commits.
  void set_root(std::string name, ObjectRef ref);

  CommitResult commit();
  void abort();

  std::size_t write_count() const noexcept { return writes_.size(); }
  std::size_t alloc_count() const noexcept { return allocs_.size(); }

 private:
  friend class TxManager;

  struct PendingAlloc {
    ObjectRef ref;
    PlassId plass = 0;
    std::uint32_t slots = 0;
    bool is_array = false;
  };

  Transaction(TxManager& mgr, std::uint64_t id);

  void require_active() const;
  void finish(State state) noexcept;
  void discard_allocs() noexcept;

  TxManager& mgr_;
  std::uint64_t id_;
  State state_ = State::kActive;
  bool poisoned_ = false;
  std::unordered_map<std::uint64_t, std::uint32_t> reads_;  // object id -> observed version
  std::map<std::pair<std::uint64_t, std::uint32_t>, Value> writes_;
  std::vector<PendingAlloc> allocs_;
  std::unordered_map<std::uint64_t, std::size_t> alloc_index_;
  std::vector<std::pair<std::string, ObjectRef>> deferred_roots_;
};

/// Owns the active log segment tail, the STM lock table and the commit
/// protocol for one heap.
class TxManager {
 public:
  explicit TxManager(Heap& heap);

  Heap& heap() noexcept { return heap_; }

  /// NestedTransaction if this thread already has one open on this heap.
  std::unique_ptr<Transaction> begin();
  bool thread_in_transaction() const;

  /// Reads outside a transaction. Zero fences.
  Value read_field(ObjectRef ref, std::uint32_t field);
  /// Self-committing single-field update: exactly one fence.
  void write_field_atomic(ObjectRef ref, std::uint32_t field, Value value);

  /// Root update outside a transaction (waits out a running GC).
  void set_root(std::string_view name, ObjectRef ref);

  void set_commit_mode(CommitMode mode) noexcept { mode_ = mode; }
  CommitMode commit_mode() const noexcept { return mode_; }

  // Log segment state.
  std::uint64_t log_tail() const;
  std::uint64_t log_capacity() const noexcept { return heap_.log_segment().length; }
  void reset_log(std::uint64_t tail);
  std::uint64_t next_tx_id() const noexcept { return next_tx_.load(); }
  void reset_tx_ids(std::uint64_t next) noexcept { next_tx_.store(next); }

  /// Reads the newest value record at `log_offset` (0 reads as zero).
  Value load_value(UniType type, std::uint64_t log_offset) const;

  /// Rebuilds the DRAM lock table from the media header chunks with every
  /// lock bit cleared.
  void reset_locks();
  std::uint32_t lock_word(ObjectRef ref) const { return locks_[ref.chunk()].load(std::memory_order_acquire); }

  /// Called after each durable commit, outside the safepoint.
  void set_commit_hook(std::function<void()> hook) { commit_hook_ = std::move(hook); }

  std::uint64_t committed_count() const noexcept { return committed_.load(); }
  std::uint64_t conflict_count() const noexcept { return conflicts_.load(); }

 private:
  friend class Transaction;

  /// Appends with the log mutex held; returns the absolute device offset.
  std::uint64_t append_locked(const LogEntry& entry);
  std::uint64_t log_remaining_locked() const noexcept { return log_capacity() - tail_; }
  bool try_lock_object(ObjectRef ref);
  void lock_object(ObjectRef ref);
  void unlock_object(ObjectRef ref, bool bump) noexcept;
  CommitResult commit(Transaction& tx);
  void check_reference_value(const Value& value, const Transaction* tx) const;

  Heap& heap_;
  CommitMode mode_ = CommitMode::kDurable;

  mutable std::mutex log_mu_;
  std::uint64_t tail_ = 0;  // bytes used in the active segment

  std::atomic<std::uint64_t> next_tx_{1};
  std::atomic<std::uint64_t> committed_{0};
  std::atomic<std::uint64_t> conflicts_{0};
  std::unique_ptr<std::atomic<std::uint32_t>[]> locks_;
  std::function<void()> commit_hook_;
};

}  // namespace uniheap
