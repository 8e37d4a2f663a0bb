#include "gc/collector.hpp"

#include <algorithm>
#include <array>
#include <deque>

#include "common/bytes.hpp"
#include "common/error.hpp"
#include "txlog/log_entry.hpp"

namespace uniheap {

using pmem::FenceSite;

Collector::Collector(Heap& heap, TxManager& txm) : heap_(heap), txm_(txm) {}

std::uint64_t Collector::register_runtime(VrootProvider vroots, RelocateCallback relocate) {
  std::lock_guard lock(rt_mu_);
  const auto id = next_rt_++;
  runtimes_.emplace(id, Runtime{std::move(vroots), std::move(relocate)});
  return id;
}

void Collector::unregister_runtime(std::uint64_t id) {
  std::lock_guard lock(rt_mu_);
  runtimes_.erase(id);
}

std::size_t Collector::runtime_count() const {
  std::lock_guard lock(rt_mu_);
  return runtimes_.size();
}

GcReport Collector::request_gc() {
  if (heap_.read_only()) fail(ErrorCode::kReadOnly, "heap opened read-only");
  if (txm_.thread_in_transaction()) fail(ErrorCode::kNestedTransaction, "gc requested inside an open transaction");
  std::unique_lock run(run_mu_, std::try_to_lock);
  if (!run.owns_lock()) fail(ErrorCode::kGcAlreadyRunning, "a collection is already in progress");

  StopTheWorld world(heap_.gate());
  std::vector<ObjectRef> vroots;
  std::vector<RelocateCallback> listeners;
  {
    std::lock_guard lock(rt_mu_);
    for (auto& [id, rt] : runtimes_) {
      if (rt.vroots) {
        auto held = rt.vroots();
        vroots.insert(vroots.end(), held.begin(), held.end());
      }
      if (rt.relocate) listeners.push_back(rt.relocate);
    }
  }
  auto report = collect(vroots, FenceSite::kGc);
  // Runtimes rewrite their held references before the world resumes.
  for (auto& cb : listeners) cb(last_forwarding_);
  return report;
}

std::vector<bool> Collector::mark(const std::vector<ObjectRef>& vroots) const {
  const auto& objects = heap_.objects();
  std::vector<bool> marks(heap_.chunk_capacity(), false);
  std::deque<ObjectRef> work;
  auto push = [&](ObjectRef ref) {
    if (ref.is_null() || !objects.is_live(ref) || marks[ref.chunk()]) return;
    marks[ref.chunk()] = true;
    work.push_back(ref);
  };
  for (const auto& root : heap_.list_roots()) push(root.ref);
  for (auto ref : vroots) push(ref);
  while (!work.empty()) {
    const auto ref = work.front();
    work.pop_front();
    const auto* table = objects.find(ref);
    const auto* plass = heap_.plasses().get(table->plass_id());
    for (std::uint32_t i = 0; i < table->size(); ++i) {
      const auto type = table->is_array() ? plass->element_type() : plass->fields[i].type;
      if (type != UniType::kReference) {
        if (table->is_array()) break;
        continue;
      }
      push(txm_.load_value(type, table->peek(i)).as_ref());
    }
  }
  return marks;
}

Forwarding Collector::relocate(const std::vector<bool>& marks) {
  Forwarding fwd(marks.size(), 0);
  std::uint64_t next = 0;
  for (std::size_t i = 0; i < marks.size(); ++i)
    if (marks[i]) fwd[i] = ++next;
  return fwd;
}

void Collector::set_phase(GcPhase phase, FenceSite site) {
  heap_.store_word(hdr::kGcPhase, static_cast<std::uint64_t>(phase), site);
}

GcReport Collector::collect(const std::vector<ObjectRef>& vroots, FenceSite site) {
  auto& dev = heap_.device();
  auto& objects = heap_.objects();
  for (auto ref : vroots)
    if (!objects.is_live(ref)) fail(ErrorCode::kInvalidVroot, "vroot " + std::to_string(ref.id) + " is not live");

  GcReport report;
  report.log_bytes_before = txm_.log_tail();
  const auto live_before = objects.live_count();
  const auto source_epoch = heap_.active_epoch();

  // Phase 1: marking. The source epoch lets recovery tell a flipped cleanup
  // from an unflipped one.
  dev.atomic_write_u64(hdr::kGcSourceEpoch, source_epoch);
  set_phase(GcPhase::kMarking, site);
  const auto marks = mark(vroots);

  // Phase 2: relocation.
  set_phase(GcPhase::kRelocation, site);
  const auto fwd = relocate(marks);

  // Build the compacted image in memory first so an oversize result can be
  // refused before anything is written.
  struct Moved {
    ObjectHeader header;
    std::uint32_t slots;
    bool is_array;
    std::size_t first_val;
  };
  std::vector<Moved> moved;
  std::vector<LogEntry> entries;
  for (std::uint64_t chunk = 0; chunk < fwd.size(); ++chunk) {
    if (fwd[chunk] == 0) continue;
    const ObjectRef old{chunk + 1};
    const ObjectRef now{fwd[chunk]};
    const auto* table = objects.find(old);
    const auto* plass = heap_.plasses().get(table->plass_id());
    ObjectHeader header;
    header.plass_id = table->plass_id();
    header.lock_word = txm_.lock_word(old) & kVersionMask;
    header.flags = table->is_array() ? kFlagArray : 0;

    LogEntry hdr_entry;
    hdr_entry.kind = EntryKind::kCheckpointHdr;
    hdr_entry.object_id = now.id;
    hdr_entry.field_index = table->size();
    hdr_entry.value = table->plass_id();
    entries.push_back(hdr_entry);
    moved.push_back({header, table->size(), table->is_array(), entries.size()});

    for (std::uint32_t i = 0; i < table->size(); ++i) {
      const auto offset = table->peek(i);
      if (offset == 0) continue;
      const auto type = table->is_array() ? plass->element_type() : plass->fields[i].type;
      auto bits = txm_.load_value(type, offset).bits();
      if (type == UniType::kReference && bits != 0) bits = bits <= fwd.size() ? fwd[bits - 1] : 0;
      if (bits == 0) continue;
      LogEntry val;
      val.kind = EntryKind::kCheckpointVal;
      val.type_tag = static_cast<std::uint8_t>(type);
      val.object_id = now.id;
      val.field_index = i;
      val.value = bits;
      entries.push_back(val);
    }
  }

  const auto new_log = heap_.inactive_log_segment();
  if (entries.size() * kLogEntryBytes > new_log.length) {
    set_phase(GcPhase::kIdle, site);
    fail(ErrorCode::kLogFull, "compacted log does not fit the inactive segment");
  }

  // Phase 3: compaction into the inactive spaces.
  set_phase(GcPhase::kCompaction, site);
  const auto new_space = heap_.inactive_object_space();
  const auto new_bitmap = heap_.inactive_bitmap();
  dev.zero_range(new_space.offset, new_space.length);
  dev.zero_range(new_log.offset, new_log.length);
  dev.zero_range(new_bitmap.offset, new_bitmap.length);

  std::vector<std::uint64_t> val_offsets(entries.size(), 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    val_offsets[i] = new_log.offset + i * kLogEntryBytes;
    dev.write(val_offsets[i], entries[i].encode());
  }
  for (std::size_t n = 0; n < moved.size(); ++n) {
    const auto& h = moved[n].header;
    std::array<std::uint8_t, kChunkBytes> raw{};
    bytes::store(raw.data(), h.plass_id);
    bytes::store(raw.data() + 4, h.lock_word);
    bytes::store(raw.data() + 8, h.flags);
    dev.write(new_space.offset + n * kChunkBytes, raw);
  }
  std::vector<std::uint8_t> bitmap_bytes(new_bitmap.length, 0);
  for (std::size_t n = 0; n < moved.size(); ++n) bitmap_bytes[n / 8] |= static_cast<std::uint8_t>(1u << (n % 8));
  dev.write(new_bitmap.offset, bitmap_bytes);

  const auto roots = heap_.root_slot_count();
  for (std::size_t slot = 0; slot < roots; ++slot) {
    const auto addr = dev.read_u64(heap_.layout().region(RegionId::kRoots).offset + slot * kRootSlotBytes + kRootNameBytes);
    const auto forwarded = addr != 0 && addr <= fwd.size() ? fwd[addr - 1] : 0;
    dev.write_u64(hdr::kGcRootStage + slot * 8, forwarded);
  }
  dev.atomic_write_u64(hdr::kTxIdBase, txm_.next_tx_id());
  dev.atomic_write_u64(hdr::kNextHeaderIndex, moved.size());
  dev.atomic_write_u64(hdr::kLogTail, entries.size() * kLogEntryBytes);
  if (!heap_.read_only()) {
    dev.flush_range(new_space.offset, new_space.length);
    dev.flush_range(new_log.offset, new_log.length);
    dev.flush_range(new_bitmap.offset, new_bitmap.length);
    dev.flush_range(hdr::kGcRootStage, roots * 8);
    dev.flush_range(hdr::kActiveEpoch, 64);
    dev.fence(site);
  }

  // Phase 4: cleanup.
  finish_cleanup(site);

  // Volatile state of the new epoch, built from what was just written.
  objects.clear();
  for (std::size_t n = 0; n < moved.size(); ++n) {
    const ObjectRef ref{n + 1};
    auto& table = objects.install(ref, moved[n].header.plass_id, moved[n].slots, moved[n].is_array);
    for (auto i = moved[n].first_val; i < entries.size() && entries[i].kind == EntryKind::kCheckpointVal; ++i)
      table.set(entries[i].field_index, val_offsets[i]);
  }
  heap_.reset_allocator(moved.size(), {});
  txm_.reset_log(entries.size() * kLogEntryBytes);
  txm_.reset_locks();

  last_forwarding_ = fwd;
  ++runs_;
  report.live = moved.size();
  report.reclaimed = live_before - moved.size();
  report.log_bytes_after = entries.size() * kLogEntryBytes;
  report.checkpoint_values = entries.size() - moved.size();
  report.epoch = heap_.active_epoch();
  return report;
}

void Collector::finish_cleanup(FenceSite site) {
  auto& dev = heap_.device();
  set_phase(GcPhase::kCleanup, site);
  const auto roots = heap_.root_slot_count();
  const auto table = heap_.layout().region(RegionId::kRoots);
  for (std::size_t slot = 0; slot < roots; ++slot)
    dev.atomic_write_u64(table.offset + slot * kRootSlotBytes + kRootNameBytes, dev.read_u64(hdr::kGcRootStage + slot * 8));
  heap_.persist(table.offset, table.length, site);
  const auto source = heap_.word(hdr::kGcSourceEpoch);
  if (heap_.word(hdr::kActiveEpoch) == source) heap_.store_word(hdr::kActiveEpoch, source + 1, site);
  heap_.reload_epoch();
  set_phase(GcPhase::kIdle, site);
  heap_.reload_roots();
}

}  // namespace uniheap
