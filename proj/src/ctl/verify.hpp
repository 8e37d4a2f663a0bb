#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniheap {

struct Violation {
  std::string code;
  std::string location;
  std::string detail;
};

struct VerifyReport {
  /// Set when the image carries no heap magic; nothing else is checked.
  bool not_a_heap = false;
  std::vector<Violation> violations;
  std::map<std::string, std::uint64_t> checked;

  bool clean() const noexcept { return !not_a_heap && violations.empty(); }
};

/// Structural check of a heap image exactly as persisted, without running
/// recovery: header, region table, plass region, root table, every log
/// entry's crc up to the first empty slot, commit counts, bitmap soundness,
/// references, plass references and stray lock bits.
VerifyReport verify_image(std::span<const std::uint8_t> image);

nlohmann::json to_json(const VerifyReport& report);

}  // namespace uniheap
