#include "object/unitype.hpp"

#include <array>
#include <string>
#include <utility>

#include "common/error.hpp"

namespace uniheap {

bool is_valid_type_tag(std::uint8_t tag) noexcept { return tag >= 1 && tag <= 7; }

std::string_view unitype_name(UniType type) noexcept {
  switch (type) {
    case UniType::kChar: return "char";
    case UniType::kShort: return "short";
    case UniType::kInt: return "int";
    case UniType::kLong: return "long";
    case UniType::kFloat: return "float";
    case UniType::kDouble: return "double";
    case UniType::kReference: return "reference";
  }
  return "?";
}

std::optional<UniType> parse_unitype(std::string_view name) noexcept {
  for (std::uint8_t tag = 1; tag <= 7; ++tag) {
    const auto type = static_cast<UniType>(tag);
    if (unitype_name(type) == name) return type;
  }
  if (name == "ref") return UniType::kReference;
  return std::nullopt;
}

unsigned unitype_bits(UniType type) noexcept {
  switch (type) {
    case UniType::kChar: return 8;
    case UniType::kShort: return 16;
    case UniType::kInt: return 32;
    case UniType::kFloat: return 32;
    case UniType::kLong:
    case UniType::kDouble:
    case UniType::kReference: return 64;
  }
  return 64;
}

Value Value::from_bits(UniType type, std::uint64_t raw) {
  switch (type) {
    case UniType::kChar: return of_char(static_cast<std::int8_t>(raw));
    case UniType::kShort: return of_short(static_cast<std::int16_t>(raw));
    case UniType::kInt: return of_int(static_cast<std::int32_t>(raw));
    case UniType::kFloat: return {type, raw & 0xffffffffULL};
    case UniType::kLong:
    case UniType::kDouble:
    case UniType::kReference: return {type, raw};
  }
  fail(ErrorCode::kInvalidArgument, "bad type tag " + std::to_string(static_cast<int>(type)));
}

std::optional<Language> parse_language(std::string_view name) noexcept {
  if (name == "java") return Language::kJava;
  if (name == "python") return Language::kPython;
  if (name == "javascript" || name == "js") return Language::kJavaScript;
  return std::nullopt;
}

namespace {

using Cell = std::pair<std::string_view, UniType>;

constexpr std::array kJava{
    Cell{"boolean", UniType::kChar},   Cell{"byte", UniType::kChar},     Cell{"char", UniType::kShort},
    Cell{"int", UniType::kInt},        Cell{"long", UniType::kLong},     Cell{"float", UniType::kFloat},
    Cell{"double", UniType::kDouble},  Cell{"reference", UniType::kReference}, Cell{"array", UniType::kReference},
};

constexpr std::array kPython{
    Cell{"int", UniType::kInt},         Cell{"long", UniType::kLong},       Cell{"float", UniType::kFloat},
    Cell{"list", UniType::kReference},  Cell{"dict", UniType::kReference},  Cell{"tuple", UniType::kReference},
};

constexpr std::array kJavaScript{
    Cell{"boolean", UniType::kChar},
    Cell{"num", UniType::kDouble},
    Cell{"array", UniType::kReference},
};

template <std::size_t N>
std::optional<UniType> lookup(const std::array<Cell, N>& table, std::string_view name) {
  for (const auto& [foreign, uni] : table)
    if (foreign == name) return uni;
  return std::nullopt;
}

}  // namespace

UniType map_foreign_type(Language language, std::string_view foreign_type, std::optional<UniType> declared) {
  std::optional<UniType> mapped;
  switch (language) {
    case Language::kJava: mapped = lookup(kJava, foreign_type); break;
    case Language::kPython: mapped = lookup(kPython, foreign_type); break;
    case Language::kJavaScript:
      mapped = lookup(kJavaScript, foreign_type);
      if (mapped && foreign_type == "num" && declared) {
        switch (*declared) {
          case UniType::kInt:
          case UniType::kLong:
          case UniType::kFloat:
          case UniType::kDouble: mapped = declared; break;
          default:
            fail(ErrorCode::kUnmappedType, "javascript num cannot be declared as " + std::string(unitype_name(*declared)));
        }
      }
      break;
  }
  if (!mapped) fail(ErrorCode::kUnmappedType, "no UniType for '" + std::string(foreign_type) + "'");
  return *mapped;
}

}  // namespace uniheap
