#include "object/plass.hpp"

#include <algorithm>
#include <mutex>
#include <unordered_set>

#include "common/bytes.hpp"
#include "common/error.hpp"

namespace uniheap {

std::uint32_t Plass::field_index(std::string_view field_name) const {
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].name == field_name) return static_cast<std::uint32_t>(i);
  fail(ErrorCode::kNotFound, "plass '" + name + "' has no field '" + std::string(field_name) + "'");
}

std::string array_plass_name(UniType element) { return "[" + std::string(unitype_name(element)); }

namespace plass_codec {

std::vector<std::uint8_t> encode(std::string_view name, std::span<const FieldDesc> fields) {
  std::vector<std::uint8_t> out;
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  put16(static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put16(static_cast<std::uint16_t>(fields.size()));
  for (const auto& f : fields) {
    put16(static_cast<std::uint16_t>(f.name.size()));
    out.insert(out.end(), f.name.begin(), f.name.end());
    out.push_back(static_cast<std::uint8_t>(f.type));
  }
  out.resize(bytes::align_up(out.size(), 8), 0);
  return out;
}

std::optional<Plass> decode(std::span<const std::uint8_t> in, std::size_t& consumed) {
  std::size_t pos = 0;
  auto get16 = [&](std::uint16_t& v) {
    if (in.size() - pos < 2) return false;
    v = bytes::load<std::uint16_t>(in.data() + pos);
    pos += 2;
    return true;
  };
  auto get_str = [&](std::uint16_t len, std::string& s) {
    if (in.size() - pos < len) return false;
    s.assign(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    return true;
  };
  Plass plass;
  std::uint16_t name_len = 0;
  std::uint16_t field_count = 0;
  if (!get16(name_len) || name_len == 0 || !get_str(name_len, plass.name)) return std::nullopt;
  if (!get16(field_count) || field_count == 0) return std::nullopt;
  plass.fields.resize(field_count);
  for (auto& f : plass.fields) {
    std::uint16_t len = 0;
    if (!get16(len) || !get_str(len, f.name) || pos >= in.size()) return std::nullopt;
    const auto tag = in[pos++];
    if (!is_valid_type_tag(tag)) return std::nullopt;
    f.type = static_cast<UniType>(tag);
  }
  consumed = bytes::align_up(pos, 8);
  if (consumed > in.size()) return std::nullopt;
  return plass;
}

}  // namespace plass_codec

PlassRegistry::PlassRegistry(pmem::SimulatedNvm& dev, Region region, std::uint64_t used_word, bool read_only)
    : dev_(dev), region_(region), used_word_(used_word), read_only_(read_only) {}

void PlassRegistry::load() {
  std::unique_lock lock(mu_);
  plasses_.clear();
  by_name_.clear();
  const auto used = dev_.read_u64(used_word_);
  if (used > region_.length) fail(ErrorCode::kCorruptHeader, "plass region used size past region end");
  const auto view = dev_.volatile_view().subspan(region_.offset, used);
  std::size_t pos = 0;
  while (pos < used) {
    std::size_t consumed = 0;
    auto plass = plass_codec::decode(view.subspan(pos), consumed);
    if (!plass) fail(ErrorCode::kCorruptHeader, "undecodable plass record at region offset " + std::to_string(pos));
    plass->id = static_cast<PlassId>(plasses_.size() + 1);
    by_name_.emplace(plass->name, plass->id);
    plasses_.push_back(std::make_unique<Plass>(std::move(*plass)));
    pos += consumed;
  }
  used_ = used;
}

PlassId PlassRegistry::append(std::string_view name, std::span<const FieldDesc> fields) {
  if (read_only_) fail(ErrorCode::kReadOnly, "init_plass on a read-only heap");
  const auto record = plass_codec::encode(name, fields);
  if (record.size() > region_.length - used_) fail(ErrorCode::kPlassRegionFull, "no room for plass '" + std::string(name) + "'");
  // Descriptor first, then the used-length word: a crash in between leaves
  // an unreferenced record that the next append overwrites.
  dev_.write(region_.offset + used_, record);
  dev_.flush_range(region_.offset + used_, record.size());
  dev_.fence(pmem::FenceSite::kPlass);
  dev_.atomic_write_u64(used_word_, used_ + record.size());
  dev_.flush_range(used_word_, 8);
  dev_.fence(pmem::FenceSite::kPlass);
  used_ += record.size();

  auto plass = std::make_unique<Plass>();
  plass->id = static_cast<PlassId>(plasses_.size() + 1);
  plass->name = std::string(name);
  plass->fields.assign(fields.begin(), fields.end());
  const auto id = plass->id;
  by_name_.emplace(plass->name, id);
  plasses_.push_back(std::move(plass));
  return id;
}

PlassId PlassRegistry::init(std::string_view name, std::span<const FieldDesc> fields) {
  if (name.empty() || name.size() > 0xffff) fail(ErrorCode::kInvalidArgument, "plass name must be 1..65535 bytes");
  if (fields.empty() || fields.size() > 0xffff) fail(ErrorCode::kInvalidArgument, "plass needs 1..65535 fields");
  if (name.front() == '[') {
    const bool array_form = fields.size() == 1 && fields[0].name == "element" &&
                            name == array_plass_name(fields[0].type);
    if (!array_form) fail(ErrorCode::kInvalidArgument, "plass names starting with '[' are reserved for arrays");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& f : fields) {
    if (f.name.size() > 0xffff) fail(ErrorCode::kInvalidArgument, "field name too long");
    if (!seen.insert(f.name).second) fail(ErrorCode::kInvalidArgument, "duplicate field '" + f.name + "'");
    if (!is_valid_type_tag(static_cast<std::uint8_t>(f.type))) fail(ErrorCode::kInvalidArgument, "bad field type");
  }
  std::unique_lock lock(mu_);
  if (auto it = by_name_.find(std::string(name)); it != by_name_.end()) {
    const auto& existing = *plasses_[it->second - 1];
    if (!std::equal(existing.fields.begin(), existing.fields.end(), fields.begin(), fields.end()))
      fail(ErrorCode::kSchemaMismatch, "plass '" + std::string(name) + "' already exists with a different layout");
    return it->second;
  }
  return append(name, fields);
}

PlassId PlassRegistry::ensure_array(UniType element) {
  const FieldDesc field{"element", element};
  return init(array_plass_name(element), std::span(&field, 1));
}

std::optional<PlassId> PlassRegistry::find(std::string_view name) const {
  std::shared_lock lock(mu_);
  if (auto it = by_name_.find(std::string(name)); it != by_name_.end()) return it->second;
  return std::nullopt;
}

const Plass* PlassRegistry::get(PlassId id) const {
  std::shared_lock lock(mu_);
  if (id == 0 || id > plasses_.size()) return nullptr;
  return plasses_[id - 1].get();
}

std::size_t PlassRegistry::count() const {
  std::shared_lock lock(mu_);
  return plasses_.size();
}

std::vector<const Plass*> PlassRegistry::all() const {
  std::shared_lock lock(mu_);
  std::vector<const Plass*> out;
  for (const auto& p : plasses_) out.push_back(p.get());
  return out;
}

std::uint64_t PlassRegistry::used_bytes() const {
  std::shared_lock lock(mu_);
  return used_;
}

}  // namespace uniheap
