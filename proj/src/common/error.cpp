#include "common/error.hpp"

namespace uniheap {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidCapacity: return "InvalidCapacity";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kMisaligned: return "Misaligned";
    case ErrorCode::kNameTooLong: return "NameTooLong";
    case ErrorCode::kGeometryTooLarge: return "GeometryTooLarge";
    case ErrorCode::kAlreadyFormatted: return "AlreadyFormatted";
    case ErrorCode::kNotAHeap: return "NotAHeap";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kObjectSpaceFull: return "ObjectSpaceFull";
    case ErrorCode::kRootTableFull: return "RootTableFull";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kPlassRegionFull: return "PlassRegionFull";
    case ErrorCode::kUnmappedType: return "UnmappedType";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNestedTransaction: return "NestedTransaction";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kTxNotActive: return "TxNotActive";
    case ErrorCode::kDanglingReference: return "DanglingReference";
    case ErrorCode::kUnknownPlass: return "UnknownPlass";
    case ErrorCode::kLogFull: return "LogFull";
    case ErrorCode::kGcAlreadyRunning: return "GcAlreadyRunning";
    case ErrorCode::kInvalidVroot: return "InvalidVroot";
    case ErrorCode::kCorruptHeap: return "CorruptHeap";
    case ErrorCode::kLockHeld: return "LockHeld";
    case ErrorCode::kReadOnly: return "ReadOnly";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kCrashInjected: return "CrashInjected";
  }
  return "Unknown";
}

}  // namespace uniheap
