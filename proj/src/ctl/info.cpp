#include "ctl/info.hpp"

#include <string>

namespace uniheap {

nlohmann::json to_json(const HeapStats& s) {
  return {{"object_count", s.object_count}, {"live_count", s.live_count},       {"plass_count", s.plass_count},
          {"log_bytes_used", s.log_bytes_used}, {"fence_count", s.fence_count}, {"active_epoch", s.active_epoch}};
}

nlohmann::json to_json(const GcReport& r) {
  return {{"live", r.live},
          {"reclaimed", r.reclaimed},
          {"log_bytes_before", r.log_bytes_before},
          {"log_bytes_after", r.log_bytes_after},
          {"checkpoint_values", r.checkpoint_values},
          {"active_epoch", r.epoch}};
}

nlohmann::json to_json(const RecoveryReport& r) {
  return {{"replayed_txs", r.replayed_txs},     {"discarded_entries", r.discarded_entries},
          {"scanned_entries", r.scanned_entries}, {"torn_tail", r.torn_tail},
          {"cleanup_completed", r.cleanup_completed}, {"gc_redone", r.gc_redone}};
}

nlohmann::json info_json(Session& session) {
  auto& heap = session.heap();
  const auto& layout = heap.layout();
  nlohmann::json j;
  j["name"] = heap.name();
  j["heap_size"] = layout.heap_size;
  j["version"] = kHeapVersion;
  j["active_epoch"] = heap.active_epoch();
  j["gc_phase"] = std::string(gc_phase_name(heap.gc_phase()));
  j["next_header_index"] = heap.next_header_index();
  j["chunk_capacity"] = heap.chunk_capacity();
  j["root_slots"] = heap.root_slot_count();

  auto& regions = j["regions"] = nlohmann::json::array();
  for (std::size_t i = 0; i < kRegionCount; ++i) {
    const auto id = static_cast<RegionId>(i);
    regions.push_back({{"name", std::string(region_name(id))},
                       {"offset", layout.regions[i].offset},
                       {"length", layout.regions[i].length}});
  }
  j["stats"] = to_json(session.heap_stats());
  j["recovery"] = to_json(session.recovery());

  auto& roots = j["roots"] = nlohmann::json::array();
  for (const auto& r : session.list_roots()) roots.push_back({{"name", r.name}, {"object", r.ref.id}, {"slot", r.slot}});

  auto& plasses = j["plasses"] = nlohmann::json::array();
  for (const auto* p : heap.plasses().all()) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& f : p->fields) fields.push_back({{"name", f.name}, {"type", std::string(unitype_name(f.type))}});
    plasses.push_back({{"id", p->id}, {"name", p->name}, {"is_array", p->is_array()}, {"fields", fields}});
  }
  return j;
}

}  // namespace uniheap
