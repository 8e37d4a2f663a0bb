#include "txlog/transaction.hpp"

#include <algorithm>
#include <thread>

#include "common/error.hpp"

namespace uniheap {

using pmem::FenceSite;

namespace {

thread_local std::vector<const TxManager*> t_open;

void mark_open(const TxManager* mgr) { t_open.push_back(mgr); }
void mark_closed(const TxManager* mgr) noexcept {
  if (auto it = std::find(t_open.begin(), t_open.end(), mgr); it != t_open.end()) t_open.erase(it);
}

constexpr int kLockSpins = 2000;

}  // namespace

// ---------------------------------------------------------------- Transaction

Transaction::Transaction(TxManager& mgr, std::uint64_t id) : mgr_(mgr), id_(id) {}

Transaction::~Transaction() {
  if (state_ == State::kActive) abort();
}

void Transaction::require_active() const {
  if (state_ != State::kActive) fail(ErrorCode::kTxNotActive, "transaction " + std::to_string(id_) + " is not active");
}

Value Transaction::read(ObjectRef ref, std::uint32_t field) {
  require_active();
  auto& heap = mgr_.heap_;
  if (auto it = alloc_index_.find(ref.id); it != alloc_index_.end()) {
    const auto& a = allocs_[it->second];
    if (field >= a.slots) fail(ErrorCode::kIndexOutOfRange, "field " + std::to_string(field));
    const auto* plass = heap.plasses().get(a.plass);
    const auto type = a.is_array ? plass->element_type() : plass->fields[field].type;
    if (auto w = writes_.find({ref.id, field}); w != writes_.end()) return w->second;
    return Value::zero(type);
  }
  const auto* table = heap.objects().find(ref);
  if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
  const auto* plass = heap.plasses().get(table->plass_id());
  const auto before = mgr_.locks_[ref.chunk()].load(std::memory_order_acquire);
  const auto offset = table->translate(field);
  const auto type = table->is_array() ? plass->element_type() : plass->fields[field].type;
  if (auto w = writes_.find({ref.id, field}); w != writes_.end()) return w->second;
  const auto value = mgr_.load_value(type, offset);
  const auto after = mgr_.locks_[ref.chunk()].load(std::memory_order_acquire);
  if ((before & kLockBit) != 0 || before != after) poisoned_ = true;
  auto [seen, inserted] = reads_.try_emplace(ref.id, before & kVersionMask);
  if (!inserted && seen->second != (before & kVersionMask)) poisoned_ = true;
  return value;
}

void Transaction::write(ObjectRef ref, std::uint32_t field, Value value) {
  require_active();
  auto& heap = mgr_.heap_;
  if (heap.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  PlassId plass_id;
  std::uint32_t slots;
  bool is_array;
  if (auto it = alloc_index_.find(ref.id); it != alloc_index_.end()) {
    plass_id = allocs_[it->second].plass;
    slots = allocs_[it->second].slots;
    is_array = allocs_[it->second].is_array;
  } else {
    const auto* table = heap.objects().find(ref);
    if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
    plass_id = table->plass_id();
    slots = table->size();
    is_array = table->is_array();
  }
  if (field >= slots)
    fail(ErrorCode::kIndexOutOfRange, "field " + std::to_string(field) + " of " + std::to_string(slots));
  const auto* plass = heap.plasses().get(plass_id);
  const auto type = is_array ? plass->element_type() : plass->fields[field].type;
  if (value.type() != type)
    fail(ErrorCode::kTypeMismatch, std::string(unitype_name(value.type())) + " written to " +
                                       std::string(unitype_name(type)) + " field");
  mgr_.check_reference_value(value, this);
  writes_[{ref.id, field}] = value;
}

ObjectRef Transaction::alloc(PlassId plass_id, std::optional<std::uint64_t> array_length) {
  require_active();
  auto& heap = mgr_.heap_;
  if (heap.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  const auto* plass = heap.plasses().get(plass_id);
  if (plass == nullptr) fail(ErrorCode::kUnknownPlass, "plass " + std::to_string(plass_id));
  if (array_length && !plass->is_array())
    fail(ErrorCode::kInvalidArgument, "array length given for non-array plass " + plass->name);
  if (plass->is_array() && !array_length)
    fail(ErrorCode::kInvalidArgument, "array plass " + plass->name + " needs a length");
  if (array_length && *array_length > 0xffffffffULL) fail(ErrorCode::kInvalidArgument, "array length too large");

  const auto ref = heap.alloc_header();
  ObjectHeader header;
  header.plass_id = plass_id;
  header.lock_word = mgr_.locks_[ref.chunk()].load() & kVersionMask;
  header.flags = plass->is_array() ? kFlagArray : 0;
  heap.write_object_header(ref, header);

  PendingAlloc a;
  a.ref = ref;
  a.plass = plass_id;
  a.is_array = plass->is_array();
  a.slots = a.is_array ? static_cast<std::uint32_t>(*array_length) : static_cast<std::uint32_t>(plass->field_count());
  alloc_index_[ref.id] = allocs_.size();
  allocs_.push_back(a);
  return ref;
}

void Transaction::set_root(std::string name, ObjectRef ref) {
  require_active();
  if (mgr_.heap_.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  Heap::check_root_name(name);
  if (!ref.is_null() && !alloc_index_.contains(ref.id) && !mgr_.heap_.objects().is_live(ref))
    fail(ErrorCode::kDanglingReference, "root target " + std::to_string(ref.id) + " is not live");
  deferred_roots_.emplace_back(std::move(name), ref);
}

CommitResult Transaction::commit() {
  require_active();
  return mgr_.commit(*this);
}

void Transaction::abort() {
  require_active();
  discard_allocs();
  finish(State::kAborted);
}

void Transaction::discard_allocs() noexcept {
  for (auto it = allocs_.rbegin(); it != allocs_.rend(); ++it) {
    try {
      mgr_.heap_.release_header(it->ref);
    } catch (...) {
    }
  }
  allocs_.clear();
  alloc_index_.clear();
}

void Transaction::finish(State state) noexcept {
  state_ = state;
  writes_.clear();
  reads_.clear();
  deferred_roots_.clear();
  mark_closed(&mgr_);
  mgr_.heap_.gate().leave();
}

// ------------------------------------------------------------------ TxManager

TxManager::TxManager(Heap& heap)
    : heap_(heap), locks_(std::make_unique<std::atomic<std::uint32_t>[]>(heap.chunk_capacity())) {}

bool TxManager::thread_in_transaction() const {
  return std::find(t_open.begin(), t_open.end(), this) != t_open.end();
}

std::unique_ptr<Transaction> TxManager::begin() {
  if (thread_in_transaction()) fail(ErrorCode::kNestedTransaction, "thread already has an open transaction");
  heap_.gate().enter();
  mark_open(this);
  return std::unique_ptr<Transaction>(new Transaction(*this, next_tx_.fetch_add(1)));
}

Value TxManager::load_value(UniType type, std::uint64_t log_offset) const {
  if (log_offset == 0) return Value::zero(type);
  return Value::from_bits(type, heap_.device().read_u64(log_offset + 32));
}

Value TxManager::read_field(ObjectRef ref, std::uint32_t field) {
  std::optional<SafepointScope> scope;
  if (!thread_in_transaction()) scope.emplace(heap_.gate());
  const auto* table = heap_.objects().find(ref);
  if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
  const auto offset = table->translate(field);
  const auto* plass = heap_.plasses().get(table->plass_id());
  return load_value(table->is_array() ? plass->element_type() : plass->fields[field].type, offset);
}

void TxManager::check_reference_value(const Value& value, const Transaction* tx) const {
  if (value.type() != UniType::kReference) return;
  const auto target = value.as_ref();
  if (target.is_null()) return;
  if (tx != nullptr && tx->alloc_index_.contains(target.id)) return;
  if (!heap_.objects().is_live(target))
    fail(ErrorCode::kDanglingReference, "reference to dead object " + std::to_string(target.id));
}

std::uint64_t TxManager::log_tail() const {
  std::lock_guard lock(log_mu_);
  return tail_;
}

void TxManager::reset_log(std::uint64_t tail) {
  std::lock_guard lock(log_mu_);
  tail_ = tail;
}

std::uint64_t TxManager::append_locked(const LogEntry& entry) {
  if (log_remaining_locked() < kLogEntryBytes) fail(ErrorCode::kLogFull, "log segment full");
  const auto at = heap_.log_segment().offset + tail_;
  heap_.device().write(at, entry.encode());
  tail_ += kLogEntryBytes;
  return at;
}

bool TxManager::try_lock_object(ObjectRef ref) {
  auto& word = locks_[ref.chunk()];
  for (int spin = 0; spin < kLockSpins; ++spin) {
    auto cur = word.load(std::memory_order_acquire);
    if ((cur & kLockBit) == 0 && word.compare_exchange_weak(cur, cur | kLockBit, std::memory_order_acq_rel))
      return true;
    if (spin > 64) std::this_thread::yield();
  }
  return false;
}

void TxManager::lock_object(ObjectRef ref) {
  while (!try_lock_object(ref)) std::this_thread::yield();
}

void TxManager::unlock_object(ObjectRef ref, bool bump) noexcept {
  auto& word = locks_[ref.chunk()];
  const auto version = word.load(std::memory_order_relaxed) & kVersionMask;
  const auto next = bump ? ((version + 1) & kVersionMask) : version;
  if (bump) {
    try {
      heap_.write_lock_word(ref, next);
    } catch (...) {
    }
  }
  word.store(next, std::memory_order_release);
}

void TxManager::reset_locks() {
  const auto n = heap_.next_header_index();
  for (std::uint64_t i = 0; i < heap_.chunk_capacity(); ++i) {
    std::uint32_t version = 0;
    if (i < n) version = heap_.read_object_header(ObjectRef{i + 1}).lock_word & kVersionMask;
    locks_[i].store(version, std::memory_order_release);
  }
}

CommitResult TxManager::commit(Transaction& tx) {
  tx.state_ = Transaction::State::kCommitting;
  std::vector<ObjectRef> locked;
  auto release = [&](bool bump) noexcept {
    for (auto ref : locked) unlock_object(ref, bump);
    locked.clear();
  };
  auto conflict = [&]() {
    release(false);
    tx.discard_allocs();
    tx.finish(Transaction::State::kAborted);
    conflicts_.fetch_add(1);
    return CommitResult::kConflictRetry;
  };

  try {
    // STM phase: lock written objects in id order, then validate reads.
    std::vector<ObjectRef> targets;
    for (const auto& [key, value] : tx.writes_)
      if (!tx.alloc_index_.contains(key.first) && (targets.empty() || targets.back().id != key.first))
        targets.push_back(ObjectRef{key.first});
    for (auto ref : targets) {
      if (!try_lock_object(ref)) return conflict();
      locked.push_back(ref);
    }
    if (tx.poisoned_) return conflict();
    for (const auto& [id, version] : tx.reads_) {
      const auto cur = locks_[ObjectRef{id}.chunk()].load(std::memory_order_acquire);
      const bool mine = std::binary_search(targets.begin(), targets.end(), ObjectRef{id});
      if (((cur & kLockBit) != 0 && !mine) || (cur & kVersionMask) != version) return conflict();
    }

    const std::size_t entries = tx.allocs_.size() + tx.writes_.size();
    std::vector<std::uint64_t> write_offsets;
    write_offsets.reserve(tx.writes_.size());
    if (entries > 0) {
      std::lock_guard lock(log_mu_);
      if (log_remaining_locked() < (entries + 1) * kLogEntryBytes) {
        release(false);
        tx.discard_allocs();
        tx.finish(Transaction::State::kAborted);
        fail(ErrorCode::kLogFull, "log segment cannot hold " + std::to_string(entries + 1) + " entries");
      }
      auto& dev = heap_.device();
      const auto start = heap_.log_segment().offset + tail_;
      auto persist_one = [&](std::uint64_t at, std::uint64_t header_at) {
        dev.flush_range(at, kLogEntryBytes);
        dev.fence(FenceSite::kBaseline);
        if (header_at != 0) dev.flush_range(header_at, kChunkBytes);
        dev.fence(FenceSite::kBaseline);
      };
      for (const auto& a : tx.allocs_) {
        LogEntry e;
        e.kind = EntryKind::kAlloc;
        e.tx_id = tx.id_;
        e.object_id = a.ref.id;
        e.field_index = a.plass;
        e.value = a.is_array ? a.slots : 0;
        const auto at = append_locked(e);
        if (mode_ == CommitMode::kPerWrite) persist_one(at, heap_.chunk_offset(a.ref));
      }
      for (const auto& [key, value] : tx.writes_) {
        LogEntry e;
        e.kind = EntryKind::kUpdate;
        e.type_tag = static_cast<std::uint8_t>(value.type());
        e.tx_id = tx.id_;
        e.object_id = key.first;
        e.field_index = key.second;
        e.value = value.bits();
        const auto at = append_locked(e);
        write_offsets.push_back(at);
        if (mode_ == CommitMode::kPerWrite) persist_one(at, 0);
      }
      if (mode_ == CommitMode::kDurable) {
        dev.flush_range(start, entries * kLogEntryBytes);
        for (const auto& a : tx.allocs_) dev.flush_range(heap_.chunk_offset(a.ref), kChunkBytes);
        dev.fence(FenceSite::kCommitData);
      }
      LogEntry c;
      c.kind = EntryKind::kCommit;
      c.tx_id = tx.id_;
      c.value = entries;
      const auto at = append_locked(c);
      dev.flush_range(at, kLogEntryBytes);
      dev.fence(FenceSite::kCommitRecord);
    } else {
      if (!tx.deferred_roots_.empty() && heap_.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
    }

    // Publish.
    for (const auto& a : tx.allocs_) {
      heap_.objects().install(a.ref, a.plass, a.slots, a.is_array);
      heap_.set_bitmap_bit(a.ref, true);
    }
    std::size_t i = 0;
    for (const auto& [key, value] : tx.writes_) {
      heap_.objects().find(ObjectRef{key.first})->set(key.second, write_offsets[i++]);
    }
    release(true);
    tx.allocs_.clear();
    tx.alloc_index_.clear();
    for (const auto& [name, ref] : tx.deferred_roots_) heap_.write_root(name, ref);
    tx.finish(Transaction::State::kCommitted);
  } catch (...) {
    if (tx.state_ == Transaction::State::kCommitting) {
      release(false);
      tx.discard_allocs();
      tx.finish(Transaction::State::kAborted);
    }
    throw;
  }
  committed_.fetch_add(1);
  if (commit_hook_) commit_hook_();
  return CommitResult::kCommitted;
}

void TxManager::write_field_atomic(ObjectRef ref, std::uint32_t field, Value value) {
  if (thread_in_transaction()) fail(ErrorCode::kNestedTransaction, "atomic update inside an open transaction");
  if (heap_.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  {
    SafepointScope scope(heap_.gate());
    auto* table = heap_.objects().find(ref);
    if (table == nullptr) fail(ErrorCode::kDanglingReference, "object " + std::to_string(ref.id) + " is not live");
    if (field >= table->size())
      fail(ErrorCode::kIndexOutOfRange, "field " + std::to_string(field) + " of " + std::to_string(table->size()));
    const auto* plass = heap_.plasses().get(table->plass_id());
    const auto type = table->is_array() ? plass->element_type() : plass->fields[field].type;
    if (value.type() != type)
      fail(ErrorCode::kTypeMismatch, std::string(unitype_name(value.type())) + " written to " +
                                         std::string(unitype_name(type)) + " field");
    check_reference_value(value, nullptr);

    lock_object(ref);
    std::uint64_t at = 0;
    try {
      std::lock_guard lock(log_mu_);
      LogEntry e;
      e.kind = EntryKind::kAtomicUpdate;
      e.type_tag = static_cast<std::uint8_t>(type);
      e.object_id = ref.id;
      e.field_index = field;
      e.value = value.bits();
      at = append_locked(e);
      heap_.device().flush_range(at, kLogEntryBytes);
      heap_.device().fence(FenceSite::kAtomicUpdate);
    } catch (...) {
      unlock_object(ref, false);
      throw;
    }
    table->set(field, at);
    unlock_object(ref, true);
  }
  if (commit_hook_) commit_hook_();
}

void TxManager::set_root(std::string_view name, ObjectRef ref) {
  if (thread_in_transaction()) fail(ErrorCode::kNestedTransaction, "use the transaction's set_root");
  if (heap_.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  SafepointScope scope(heap_.gate());
  if (!ref.is_null() && !heap_.objects().is_live(ref))
    fail(ErrorCode::kDanglingReference, "root target " + std::to_string(ref.id) + " is not live");
  heap_.write_root(name, ref);
}

}  // namespace uniheap
