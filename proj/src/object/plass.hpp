#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "common/types.hpp"
#include "object/unitype.hpp"
#include "pmem/nvm.hpp"

namespace uniheap {

struct FieldDesc {
  std::string name;
  UniType type = UniType::kLong;

  friend bool operator==(const FieldDesc&, const FieldDesc&) = default;
};

/// A persistent class descriptor. Immutable once written.
struct Plass {
  PlassId id = 0;
  std::string name;
  std::vector<FieldDesc> fields;

  /// Array plasses are synthetic, one per element type, named "[<type>", and
  /// carry a single field describing the element.
  bool is_array() const noexcept { return !name.empty() && name.front() == '['; }
  UniType element_type() const noexcept { return fields.front().type; }
  std::size_t field_count() const noexcept { return fields.size(); }

  /// 0-based ordinal of `field_name`; throws NotFound.
  std::uint32_t field_index(std::string_view field_name) const;
};

std::string array_plass_name(UniType element);

namespace plass_codec {

/// [name_len u16][name][field_count u16]{[name_len u16][name][type u8]}*,
/// zero-padded to a multiple of 8 bytes.
std::vector<std::uint8_t> encode(std::string_view name, std::span<const FieldDesc> fields);

/// Decodes one record at the start of `bytes`. Returns nullopt when the
/// record is malformed or runs past the end; `consumed` gets the padded size.
std::optional<Plass> decode(std::span<const std::uint8_t> bytes, std::size_t& consumed);

}  // namespace plass_codec

/// The plass region: an append-only run of encoded descriptors whose used
/// length lives in a header word. Appends are serialized; lookups are shared.
class PlassRegistry {
 public:
  /// `used_word` is the device offset of the header word recording how many
  /// bytes of `region` hold committed descriptors.
  PlassRegistry(pmem::SimulatedNvm& dev, Region region, std::uint64_t used_word, bool read_only);

  /// Rebuilds the in-memory index from the region. Throws CorruptHeader.
  void load();

  /// Idempotent registration; SchemaMismatch when `name` exists with a
  /// different layout, PlassRegionFull when the region is exhausted.
  PlassId init(std::string_view name, std::span<const FieldDesc> fields);
  PlassId ensure_array(UniType element);

  std::optional<PlassId> find(std::string_view name) const;
  /// nullptr for unknown ids.
  const Plass* get(PlassId id) const;
  std::size_t count() const;
  std::vector<const Plass*> all() const;
  std::uint64_t used_bytes() const;

 private:
  PlassId append(std::string_view name, std::span<const FieldDesc> fields);

  pmem::SimulatedNvm& dev_;
  Region region_;
  std::uint64_t used_word_;
  bool read_only_;

  mutable std::shared_mutex mu_;
  std::vector<std::unique_ptr<Plass>> plasses_;
  std::unordered_map<std::string, PlassId> by_name_;
  std::uint64_t used_ = 0;
};

}  // namespace uniheap
