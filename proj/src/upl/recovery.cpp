#include "upl/recovery.hpp"

#include <algorithm>
#include <unordered_map>
#include <vector>

#include "common/error.hpp"
#include "txlog/log_entry.hpp"

namespace uniheap {

using pmem::FenceSite;

namespace {

struct Scanned {
  LogEntry entry;
  std::uint64_t offset;
};

[[noreturn]] void corrupt(std::uint64_t offset, const std::string& what) {
  fail(ErrorCode::kCorruptHeap, what + " (log offset " + std::to_string(offset) + ")");
}

}  // namespace

RecoveryReport recover(Heap& heap, TxManager& txm, Collector& gc) {
  RecoveryReport report;
  auto& dev = heap.device();
  const auto phase = heap.gc_phase();
  if (phase == GcPhase::kCleanup) {
    gc.finish_cleanup(FenceSite::kRecovery);
    report.cleanup_completed = true;
  }

  // Scan the durable prefix of the active segment.
  const auto seg = heap.log_segment();
  std::vector<Scanned> log;
  std::uint64_t pos = 0;
  const auto image = dev.volatile_view();
  for (; pos + kLogEntryBytes <= seg.length; pos += kLogEntryBytes) {
    const auto at = seg.offset + pos;
    std::span<const std::uint8_t, kLogEntryBytes> raw(image.data() + at, kLogEntryBytes);
    if (std::all_of(raw.begin(), raw.end(), [](std::uint8_t b) { return b == 0; })) break;
    auto entry = LogEntry::decode(raw);
    if (!entry) {
      report.torn_tail = true;
      ++report.discarded_entries;
      break;
    }
    log.push_back({*entry, at});
  }
  const auto valid_end = pos;
  report.scanned_entries = log.size();

  // Which transactions committed: a COMMIT whose count matches its entries.
  std::unordered_map<std::uint64_t, std::uint64_t> pending;  // tx id -> entries seen
  std::unordered_map<std::uint64_t, bool> committed;
  std::uint64_t max_tx = 0;
  for (const auto& [e, at] : log) {
    if (e.kind == EntryKind::kAlloc || e.kind == EntryKind::kUpdate) {
      if (committed.contains(e.tx_id)) corrupt(at, "entry after the COMMIT of its transaction");
      ++pending[e.tx_id];
    } else if (e.kind == EntryKind::kCommit) {
      if (pending[e.tx_id] != e.value)
        corrupt(at, "COMMIT of tx " + std::to_string(e.tx_id) + " counts " + std::to_string(e.value) +
                        " entries, log holds " + std::to_string(pending[e.tx_id]));
      committed[e.tx_id] = true;
    }
    if (!self_committing(e.kind)) max_tx = std::max(max_tx, e.tx_id);
  }

  // Replay in log order.
  auto& objects = heap.objects();
  objects.clear();
  std::uint64_t max_id = 0;
  const auto capacity = heap.chunk_capacity();
  auto install = [&](const LogEntry& e, std::uint64_t at, PlassId plass_id, std::uint64_t slots) {
    if (e.object_id == 0 || e.object_id > capacity) corrupt(at, "object id " + std::to_string(e.object_id) + " out of range");
    const auto* plass = heap.plasses().get(plass_id);
    if (plass == nullptr) corrupt(at, "unknown plass " + std::to_string(plass_id));
    if (!plass->is_array() && slots != plass->field_count()) corrupt(at, "slot count disagrees with plass " + plass->name);
    if (slots > 0xffffffffULL) corrupt(at, "array length too large");
    objects.install(ObjectRef{e.object_id}, plass_id, static_cast<std::uint32_t>(slots), plass->is_array());
    max_id = std::max(max_id, e.object_id);
  };
  auto apply_value = [&](const LogEntry& e, std::uint64_t at) {
    auto* table = objects.find(ObjectRef{e.object_id});
    if (table == nullptr) corrupt(at, "value for unallocated object " + std::to_string(e.object_id));
    if (e.field_index >= table->size()) corrupt(at, "field " + std::to_string(e.field_index) + " out of range");
    const auto* plass = heap.plasses().get(table->plass_id());
    const auto type = table->is_array() ? plass->element_type() : plass->fields[e.field_index].type;
    if (e.type_tag != static_cast<std::uint8_t>(type)) corrupt(at, "type tag disagrees with plass field");
    table->set(e.field_index, at);
  };
  for (const auto& [e, at] : log) {
    switch (e.kind) {
      case EntryKind::kAlloc:
        if (!committed.contains(e.tx_id)) {
          ++report.discarded_entries;
          break;
        }
        {
          const auto* plass = heap.plasses().get(e.field_index);
          install(e, at, e.field_index, plass != nullptr && !plass->is_array() ? plass->field_count() : e.value);
        }
        break;
      case EntryKind::kUpdate:
        if (!committed.contains(e.tx_id)) {
          ++report.discarded_entries;
          break;
        }
        apply_value(e, at);
        break;
      case EntryKind::kCommit:
        ++report.replayed_txs;
        break;
      case EntryKind::kCheckpointHdr:
        install(e, at, static_cast<PlassId>(e.value), e.field_index);
        break;
      case EntryKind::kCheckpointVal:
      case EntryKind::kAtomicUpdate:
        apply_value(e, at);
        break;
    }
  }

  // Anything past the durable prefix is debris from an interrupted append.
  const auto tail_at = seg.offset + valid_end;
  const auto tail_len = seg.length - valid_end;
  const auto rest = image.subspan(tail_at, tail_len);
  if (std::any_of(rest.begin(), rest.end(), [](std::uint8_t b) { return b != 0; })) {
    dev.zero_range(tail_at, tail_len);
    heap.persist(tail_at, tail_len, FenceSite::kRecovery);
  }

  // Allocator, bitmap and lock words. The header word only ever adds
  // never-committed chunks to the free list.
  max_id = std::max(max_id, std::min(heap.word(hdr::kNextHeaderIndex), capacity));
  std::vector<ObjectRef> free_chunks;
  std::vector<bool> live(capacity, false);
  for (std::uint64_t id = 1; id <= max_id; ++id) {
    if (objects.is_live(ObjectRef{id})) live[id - 1] = true;
    else free_chunks.push_back(ObjectRef{id});
  }
  heap.reset_allocator(max_id, std::move(free_chunks));
  if (heap.write_bitmap(live)) heap.persist(heap.bitmap().offset, heap.bitmap().length, FenceSite::kRecovery);

  bool relocked = false;
  for (std::uint64_t id = 1; id <= max_id; ++id) {
    const ObjectRef ref{id};
    if (!live[ref.chunk()]) continue;
    const auto header = heap.read_object_header(ref);
    if ((header.lock_word & kLockBit) != 0) {
      heap.write_lock_word(ref, header.lock_word & kVersionMask);
      relocked = true;
    }
  }
  if (relocked) {
    const auto space = heap.object_space();
    heap.persist(space.offset, max_id * kChunkBytes, FenceSite::kRecovery);
  }
  txm.reset_locks();
  txm.reset_log(valid_end);
  txm.reset_tx_ids(std::max(heap.word(hdr::kTxIdBase), max_tx + 1));

  if (phase == GcPhase::kMarking || phase == GcPhase::kRelocation || phase == GcPhase::kCompaction) {
    gc.collect({}, FenceSite::kRecovery);
    report.gc_redone = true;
  }
  return report;
}

}  // namespace uniheap
