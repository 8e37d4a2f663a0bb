#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uniheap {

/// Error categories surfaced by every layer. The numeric values are part of
/// the C API (uh_status) and must stay stable.
enum class ErrorCode : int {
  kOk = 0,
  kIoError = 1,
  kInvalidCapacity = 2,
  kOutOfBounds = 3,
  kMisaligned = 4,
  kNameTooLong = 5,
  kGeometryTooLarge = 6,
  kAlreadyFormatted = 7,
  kNotAHeap = 8,
  kVersionMismatch = 9,
  kCorruptHeader = 10,
  kObjectSpaceFull = 11,
  kRootTableFull = 12,
  kSchemaMismatch = 13,
  kPlassRegionFull = 14,
  kUnmappedType = 15,
  kNotFound = 16,
  kIndexOutOfRange = 17,
  kNestedTransaction = 18,
  kTypeMismatch = 19,
  kTxNotActive = 20,
  kDanglingReference = 21,
  kUnknownPlass = 22,
  kLogFull = 23,
  kGcAlreadyRunning = 24,
  kInvalidVroot = 25,
  kCorruptHeap = 26,
  kLockHeld = 27,
  kReadOnly = 28,
  kInvalidArgument = 29,
  kCrashInjected = 30,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by the simulated device when an armed crash plan fires. Everything
/// above the device treats it as a power failure: stop, unwind, touch nothing.
class CrashInjected : public Error {
 public:
  explicit CrashInjected(const std::string& what) : Error(ErrorCode::kCrashInjected, what) {}
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace uniheap
