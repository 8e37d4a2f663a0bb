#include "ctl/verify.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "common/bytes.hpp"
#include "heap/heap.hpp"
#include "object/plass.hpp"
#include "txlog/log_entry.hpp"

namespace uniheap {

namespace {

class Checker {
 public:
  explicit Checker(std::span<const std::uint8_t> image) : img_(image) {}

  VerifyReport run();

 private:
  std::uint64_t u64(std::uint64_t at) const { return bytes::load<std::uint64_t>(img_.data() + at); }
  std::uint32_t u32(std::uint64_t at) const { return bytes::load<std::uint32_t>(img_.data() + at); }
  void add(std::string code, std::string location, std::string detail) {
    report_.violations.push_back({std::move(code), std::move(location), std::move(detail)});
  }
  static std::string at(std::uint64_t offset) { return "offset " + std::to_string(offset); }
  static std::string obj(std::uint64_t id) { return "object " + std::to_string(id); }

  bool check_header();
  void check_plasses();
  void check_log();
  void check_objects();
  void check_roots();

  struct Obj {
    PlassId plass = 0;
    std::uint64_t slots = 0;
    bool is_array = false;
    std::unordered_map<std::uint32_t, std::uint64_t> values;  // field -> newest raw value
  };

  std::span<const std::uint8_t> img_;
  VerifyReport report_;
  HeapLayout layout_;
  std::uint64_t epoch_ = 0;
  std::vector<Plass> plasses_;
  std::map<std::uint64_t, Obj> objects_;
  std::uint64_t max_id_ = 0;
  std::uint64_t log_end_ = 0;
};

bool Checker::check_header() {
  if (img_.size() < kHeaderRegionBytes || u64(hdr::kMagic) != kHeapMagic) {
    report_.not_a_heap = true;
    return false;
  }
  ++report_.checked["header"];
  if (u32(hdr::kVersion) != kHeapVersion) {
    add("version", "header", "version " + std::to_string(u32(hdr::kVersion)));
    return false;
  }
  layout_.heap_size = u64(hdr::kHeapSize);
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    layout_.regions[i].offset = u64(hdr::kRegionTable + i * 16);
    layout_.regions[i].length = u64(hdr::kRegionTable + i * 16 + 8);
  }
  if (layout_.heap_size > img_.size()) {
    add("region-bounds", "header", "heap size " + std::to_string(layout_.heap_size) + " exceeds image");
    return false;
  }
  if (auto why = layout_.validate(); !why.empty()) {
    add("region-bounds", "region table", why);
    return false;
  }
  report_.checked["regions"] += kRegionCount;
  const auto phase = u64(hdr::kGcPhase);
  if (phase != static_cast<std::uint64_t>(GcPhase::kIdle))
    add("gc-phase", "header", phase <= 4 ? "collection interrupted in phase " + std::string(gc_phase_name(static_cast<GcPhase>(phase)))
                                         : "unknown phase " + std::to_string(phase));
  epoch_ = u64(hdr::kActiveEpoch);
  if (u64(hdr::kNextHeaderIndex) > layout_.chunk_capacity())
    add("next-header-index", "header", "beyond object space capacity");
  return true;
}

void Checker::check_plasses() {
  const auto region = layout_.region(RegionId::kPlass);
  const auto used = u64(hdr::kNextPlassOffset);
  if (used > region.length) {
    add("plass-region", "header", "used size " + std::to_string(used) + " past region end");
    return;
  }
  const auto view = img_.subspan(region.offset, used);
  std::set<std::string> names;
  std::size_t pos = 0;
  while (pos < used) {
    std::size_t consumed = 0;
    auto plass = plass_codec::decode(view.subspan(pos), consumed);
    if (!plass) {
      add("plass-record", at(region.offset + pos), "undecodable plass record");
      return;
    }
    plass->id = static_cast<PlassId>(plasses_.size() + 1);
    if (!names.insert(plass->name).second) add("plass-duplicate", at(region.offset + pos), "plass '" + plass->name + "' defined twice");
    plasses_.push_back(std::move(*plass));
    ++report_.checked["plasses"];
    pos += consumed;
  }
}

void Checker::check_log() {
  const auto seg = layout_.log_segment(epoch_);
  struct Seen {
    LogEntry e;
    std::uint64_t offset;
  };
  std::vector<Seen> log;
  // Offsets of entries that failed to decode; each may account for one
  // missing entry of a later COMMIT without a second report.
  std::vector<std::uint64_t> damaged;
  std::uint64_t pos = 0;
  for (; pos + kLogEntryBytes <= seg.length; pos += kLogEntryBytes) {
    const auto off = seg.offset + pos;
    std::span<const std::uint8_t, kLogEntryBytes> raw(img_.data() + off, kLogEntryBytes);
    if (std::all_of(raw.begin(), raw.end(), [](std::uint8_t b) { return b == 0; })) break;
    ++report_.checked["log_entries"];
    auto e = LogEntry::decode(raw);
    if (!e) {
      if (bytes::load<std::uint32_t>(raw.data() + 4) != entry_crc(raw)) add("log-crc", at(off), "entry crc mismatch");
      else add("log-entry", at(off), "unknown kind or nonzero reserved bytes");
      damaged.push_back(off);
      continue;
    }
    log.push_back({*e, off});
  }
  log_end_ = pos;
  const auto recorded_tail = u64(hdr::kLogTail);
  if (recorded_tail > log_end_)
    add("log-tail", "header", "recorded tail " + std::to_string(recorded_tail) + " past last entry at " + std::to_string(log_end_));

  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  std::unordered_set<std::uint64_t> committed;
  std::size_t unclaimed = 0;
  auto damaged_it = damaged.begin();
  for (const auto& [e, off] : log) {
    for (; damaged_it != damaged.end() && *damaged_it < off; ++damaged_it) ++unclaimed;
    if (e.kind == EntryKind::kAlloc || e.kind == EntryKind::kUpdate) {
      ++counts[e.tx_id];
    } else if (e.kind == EntryKind::kCommit) {
      const auto have = counts[e.tx_id];
      if (have < e.value && e.value - have <= unclaimed) {
        unclaimed -= e.value - have;
      } else if (have != e.value)
        add("commit-count", at(off), "tx " + std::to_string(e.tx_id) + " commits " + std::to_string(e.value) +
                                         " entries, log holds " + std::to_string(counts[e.tx_id]));
      else committed.insert(e.tx_id);
    }
  }

  const auto capacity = layout_.chunk_capacity();
  auto install = [&](const LogEntry& e, std::uint64_t off, PlassId plass_id, std::uint64_t slots) {
    if (e.object_id == 0 || e.object_id > capacity) {
      add("object-range", at(off), obj(e.object_id) + " outside the object space");
      return;
    }
    if (plass_id == 0 || plass_id > plasses_.size()) {
      add("plass-ref", at(off), obj(e.object_id) + " names unknown plass " + std::to_string(plass_id));
      return;
    }
    const auto& plass = plasses_[plass_id - 1];
    Obj o;
    o.plass = plass_id;
    o.is_array = plass.is_array();
    o.slots = o.is_array ? slots : plass.field_count();
    if (!o.is_array && slots != plass.field_count())
      add("slot-count", at(off), obj(e.object_id) + " slot count disagrees with plass " + plass.name);
    objects_[e.object_id] = std::move(o);
    max_id_ = std::max(max_id_, e.object_id);
  };
  auto value = [&](const LogEntry& e, std::uint64_t off) {
    auto it = objects_.find(e.object_id);
    if (it == objects_.end()) {
      add("orphan-value", at(off), "value for unallocated " + obj(e.object_id));
      return;
    }
    auto& o = it->second;
    if (e.field_index >= o.slots) {
      add("field-range", at(off), obj(e.object_id) + " field " + std::to_string(e.field_index));
      return;
    }
    const auto& plass = plasses_[o.plass - 1];
    const auto type = o.is_array ? plass.element_type() : plass.fields[e.field_index].type;
    if (e.type_tag != static_cast<std::uint8_t>(type)) {
      add("type-tag", at(off), obj(e.object_id) + " field " + std::to_string(e.field_index));
      return;
    }
    o.values[e.field_index] = e.value;
  };
  for (const auto& [e, off] : log) {
    switch (e.kind) {
      case EntryKind::kAlloc:
        if (committed.contains(e.tx_id)) {
          PlassId plass_id = e.field_index;
          const bool is_array = plass_id >= 1 && plass_id <= plasses_.size() && plasses_[plass_id - 1].is_array();
          install(e, off, plass_id, is_array ? e.value : (plass_id >= 1 && plass_id <= plasses_.size() ? plasses_[plass_id - 1].field_count() : 0));
        }
        break;
      case EntryKind::kUpdate:
        if (committed.contains(e.tx_id)) value(e, off);
        break;
      case EntryKind::kCommit:
        break;
      case EntryKind::kCheckpointHdr:
        install(e, off, static_cast<PlassId>(e.value), e.field_index);
        break;
      case EntryKind::kCheckpointVal:
      case EntryKind::kAtomicUpdate:
        value(e, off);
        break;
    }
  }
  report_.checked["objects"] = objects_.size();
}

void Checker::check_objects() {
  const auto space = layout_.object_space(epoch_);
  const auto bitmap = layout_.bitmap(epoch_);
  const auto capacity = layout_.chunk_capacity();
  for (const auto& [id, o] : objects_) {
    const auto off = space.offset + (id - 1) * kChunkBytes;
    const auto plass_id = u32(off);
    const auto lock_word = u32(off + 4);
    const auto flags = u32(off + 8);
    if (plass_id != o.plass)
      add("header-plass", at(off), obj(id) + " header names plass " + std::to_string(plass_id) + ", log names " + std::to_string(o.plass));
    if (((flags & kFlagArray) != 0) != o.is_array) add("header-flags", at(off), obj(id) + " array flag disagrees with plass");
    if ((lock_word & kLockBit) != 0) add("lock-bit", at(off), obj(id) + " left locked");
    for (const auto& [field, raw] : o.values) {
      const auto& plass = plasses_[o.plass - 1];
      const auto type = o.is_array ? plass.element_type() : plass.fields[field].type;
      if (type != UniType::kReference || raw == 0) continue;
      ++report_.checked["references"];
      if (!objects_.contains(raw))
        add("dangling-reference", obj(id) + " field " + std::to_string(field), "refers to dead " + obj(raw));
    }
  }
  for (std::uint64_t chunk = 0; chunk < capacity; ++chunk) {
    const auto byte = img_[bitmap.offset + chunk / 8];
    if (((byte >> (chunk % 8)) & 1u) == 0) continue;
    ++report_.checked["bitmap_bits"];
    if (!objects_.contains(chunk + 1))
      add("bitmap-unsound", "bitmap bit " + std::to_string(chunk), "set without a committed allocation of " + obj(chunk + 1));
  }
}

void Checker::check_roots() {
  const auto table = layout_.region(RegionId::kRoots);
  const auto next = std::max(u64(hdr::kNextHeaderIndex), max_id_);
  std::set<std::string> names;
  for (std::size_t slot = 0; slot < layout_.root_slots(); ++slot) {
    const auto off = table.offset + slot * kRootSlotBytes;
    const auto addr = u64(off + kRootNameBytes);
    if (addr == 0) continue;
    ++report_.checked["roots"];
    char name[kRootNameBytes + 1] = {};
    std::memcpy(name, img_.data() + off, kRootNameBytes);
    const std::string root(name);
    const auto where = "root slot " + std::to_string(slot) + " '" + root + "'";
    if (root.empty()) add("root-name", where, "live slot without a name");
    if (!names.insert(root).second) add("root-duplicate", where, "name used by two slots");
    if (addr > next) add("dangling-root", where, "points past next_header_index (" + std::to_string(addr) + " > " + std::to_string(next) + ")");
    else if (!objects_.contains(addr)) add("dangling-root", where, "points at dead " + obj(addr));
  }
}

VerifyReport Checker::run() {
  if (!check_header()) return report_;
  check_plasses();
  check_log();
  check_objects();
  check_roots();
  return report_;
}

}  // namespace

VerifyReport verify_image(std::span<const std::uint8_t> image) { return Checker(image).run(); }

nlohmann::json to_json(const VerifyReport& report) {
  nlohmann::json j;
  j["not_a_heap"] = report.not_a_heap;
  j["clean"] = report.clean();
  j["violations"] = nlohmann::json::array();
  for (const auto& v : report.violations)
    j["violations"].push_back({{"code", v.code}, {"location", v.location}, {"detail", v.detail}});
  j["checked"] = nlohmann::json::object();
  for (const auto& [k, n] : report.checked) j["checked"][k] = n;
  return j;
}

}  // namespace uniheap
