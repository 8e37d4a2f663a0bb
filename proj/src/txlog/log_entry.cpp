#include "txlog/log_entry.hpp"

#include <algorithm>

#include <boost/crc.hpp>

#include "common/bytes.hpp"

namespace uniheap {

std::string_view entry_kind_name(EntryKind kind) noexcept {
  switch (kind) {
    case EntryKind::kUpdate: return "UPDATE";
    case EntryKind::kAlloc: return "ALLOC";
    case EntryKind::kCommit: return "COMMIT";
    case EntryKind::kCheckpointHdr: return "CHECKPOINT_HDR";
    case EntryKind::kCheckpointVal: return "CHECKPOINT_VAL";
    case EntryKind::kAtomicUpdate: return "ATOMIC_UPDATE";
  }
  return "?";
}

bool is_valid_entry_kind(std::uint8_t kind) noexcept { return kind >= 1 && kind <= 6; }

std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept {
  boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

std::uint32_t entry_crc(std::span<const std::uint8_t, kLogEntryBytes> raw) noexcept {
  LogEntry::Bytes copy;
  std::copy(raw.begin(), raw.end(), copy.begin());
  bytes::store<std::uint32_t>(copy.data() + 4, 0);
  return crc32c(copy);
}

LogEntry::Bytes LogEntry::encode() const noexcept {
  Bytes raw{};
  raw[0] = static_cast<std::uint8_t>(kind);
  raw[1] = type_tag;
  bytes::store(raw.data() + 8, tx_id);
  bytes::store(raw.data() + 16, object_id);
  bytes::store(raw.data() + 24, field_index);
  bytes::store(raw.data() + 32, value);
  bytes::store(raw.data() + 4, crc32c(raw));
  return raw;
}

std::optional<LogEntry> LogEntry::decode(std::span<const std::uint8_t, kLogEntryBytes> raw) noexcept {
  if (!is_valid_entry_kind(raw[0])) return std::nullopt;
  if (bytes::load<std::uint16_t>(raw.data() + 2) != 0 || bytes::load<std::uint32_t>(raw.data() + 28) != 0)
    return std::nullopt;
  if (bytes::load<std::uint32_t>(raw.data() + 4) != entry_crc(raw)) return std::nullopt;
  LogEntry e;
  e.kind = static_cast<EntryKind>(raw[0]);
  e.type_tag = raw[1];
  e.tx_id = bytes::load<std::uint64_t>(raw.data() + 8);
  e.object_id = bytes::load<std::uint64_t>(raw.data() + 16);
  e.field_index = bytes::load<std::uint32_t>(raw.data() + 24);
  e.value = bytes::load<std::uint64_t>(raw.data() + 32);
  return e;
}

}  // namespace uniheap
