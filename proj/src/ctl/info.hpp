#pragma once

#include <json.hpp>

#include "upl/session.hpp"

namespace uniheap {

/// Header fields, region table, stats, roots and plasses of an open heap.
nlohmann::json info_json(Session& session);

nlohmann::json to_json(const HeapStats& stats);
nlohmann::json to_json(const GcReport& report);
nlohmann::json to_json(const RecoveryReport& report);

}  // namespace uniheap
