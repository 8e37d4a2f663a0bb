#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string_view>

#include "common/types.hpp"

namespace uniheap {

/// Language-neutral field types. The numeric values are the on-media type tag.
enum class UniType : std::uint8_t {
  kChar = 1,       // 8-bit signed
  kShort = 2,      // 16-bit signed
  kInt = 3,        // 32-bit signed
  kLong = 4,       // 64-bit signed
  kFloat = 5,      // IEEE-754 binary32
  kDouble = 6,     // IEEE-754 binary64
  kReference = 7,  // ObjectRef
};

bool is_valid_type_tag(std::uint8_t tag) noexcept;
std::string_view unitype_name(UniType type) noexcept;
std::optional<UniType> parse_unitype(std::string_view name) noexcept;
unsigned unitype_bits(UniType type) noexcept;

/// A typed field value, held widened to 64 bits exactly as it is stored in
/// log records: integers sign-extended, float as its 32-bit pattern in the
/// low word, double and references as-is.
class Value {
 public:
  constexpr Value() = default;

  static Value of_char(std::int8_t v) { return {UniType::kChar, static_cast<std::uint64_t>(static_cast<std::int64_t>(v))}; }
  static Value of_short(std::int16_t v) { return {UniType::kShort, static_cast<std::uint64_t>(static_cast<std::int64_t>(v))}; }
  static Value of_int(std::int32_t v) { return {UniType::kInt, static_cast<std::uint64_t>(static_cast<std::int64_t>(v))}; }
  static Value of_long(std::int64_t v) { return {UniType::kLong, static_cast<std::uint64_t>(v)}; }
  static Value of_float(float v) { return {UniType::kFloat, std::bit_cast<std::uint32_t>(v)}; }
  static Value of_double(double v) { return {UniType::kDouble, std::bit_cast<std::uint64_t>(v)}; }
  static Value of_ref(ObjectRef v) { return {UniType::kReference, v.id}; }
  static Value zero(UniType type) { return {type, 0}; }
  /// Narrows `raw` to the width of `type` and re-widens it, so any 64-bit
  /// input yields the canonical stored form.
  static Value from_bits(UniType type, std::uint64_t raw);

  UniType type() const noexcept { return type_; }
  std::uint64_t bits() const noexcept { return bits_; }

  std::int8_t as_char() const noexcept { return static_cast<std::int8_t>(bits_); }
  std::int16_t as_short() const noexcept { return static_cast<std::int16_t>(bits_); }
  std::int32_t as_int() const noexcept { return static_cast<std::int32_t>(bits_); }
  std::int64_t as_long() const noexcept { return static_cast<std::int64_t>(bits_); }
  float as_float() const noexcept { return std::bit_cast<float>(static_cast<std::uint32_t>(bits_)); }
  double as_double() const noexcept { return std::bit_cast<double>(bits_); }
  ObjectRef as_ref() const noexcept { return ObjectRef{bits_}; }

  friend bool operator==(const Value&, const Value&) = default;

 private:
  constexpr Value(UniType type, std::uint64_t bits) : type_(type), bits_(bits) {}

  UniType type_ = UniType::kLong;
  std::uint64_t bits_ = 0;
};

enum class Language { kJava, kPython, kJavaScript };

std::optional<Language> parse_language(std::string_view name) noexcept;

/// Maps a host-language type name onto a UniType per the cross-language type
/// table. JavaScript `num` maps to double unless `declared` names one of the
/// numeric UniTypes it spans (int, long, float, double). Throws UnmappedType
/// for cells the table leaves empty.
UniType map_foreign_type(Language language, std::string_view foreign_type,
                         std::optional<UniType> declared = std::nullopt);

}  // namespace uniheap
