#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace uniheap {

inline constexpr std::uint64_t kLogEntryBytes = 40;

enum class EntryKind : std::uint8_t {
  kUpdate = 1,
  kAlloc = 2,
  kCommit = 3,
  kCheckpointHdr = 4,
  kCheckpointVal = 5,
  kAtomicUpdate = 6,
};

std::string_view entry_kind_name(EntryKind kind) noexcept;
bool is_valid_entry_kind(std::uint8_t kind) noexcept;

/// Kinds whose crc alone makes them effective; the rest need a COMMIT.
constexpr bool self_committing(EntryKind kind) noexcept {
  return kind == EntryKind::kCheckpointHdr || kind == EntryKind::kCheckpointVal || kind == EntryKind::kAtomicUpdate;
}

/// One 40-byte log record.
///
///   0 kind u8 | 1 type_tag u8 | 2 reserved u16 | 4 crc u32 | 8 tx_id u64
///  16 object_id u64 | 24 field_index u32 | 28 reserved2 u32 | 32 value u64
///
/// ALLOC reuses field_index for the plass id and value for the array length;
/// CHECKPOINT_HDR uses field_index for the slot count; COMMIT uses value for
/// the number of entries in the transaction.
struct LogEntry {
  EntryKind kind = EntryKind::kUpdate;
  std::uint8_t type_tag = 0;
  std::uint64_t tx_id = 0;
  std::uint64_t object_id = 0;
  std::uint32_t field_index = 0;
  std::uint64_t value = 0;

  using Bytes = std::array<std::uint8_t, kLogEntryBytes>;

  /// Serializes with the crc filled in.
  Bytes encode() const noexcept;
  /// Nullopt unless the kind is known, reserved words are zero and the crc
  /// matches.
  static std::optional<LogEntry> decode(std::span<const std::uint8_t, kLogEntryBytes> raw) noexcept;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

/// CRC-32C (Castagnoli, reflected, init and xorout 0xFFFFFFFF).
std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept;

/// crc of an encoded entry computed with its crc field zeroed.
std::uint32_t entry_crc(std::span<const std::uint8_t, kLogEntryBytes> raw) noexcept;

}  // namespace uniheap
