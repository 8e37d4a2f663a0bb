#pragma once

#include <filesystem>
#include <memory>

namespace uniheap {

/// Single-writer advisory lock: `<heap>.lock` holding the owner's pid.
/// A lock whose pid is no longer running is stale and may be taken over
/// only when `force` is set.
class LockFile {
 public:
  static std::filesystem::path path_for(const std::filesystem::path& heap_path);
  /// LockHeld when another live process (or a stale lock without `force`)
  /// owns it.
  static std::unique_ptr<LockFile> acquire(const std::filesystem::path& heap_path, bool force);

  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;
  ~LockFile();

  const std::filesystem::path& path() const noexcept { return path_; }
  /// Leaves the file behind on destruction, as a dead owner would.
  void disown() noexcept { path_.clear(); }

 private:
  explicit LockFile(std::filesystem::path path) : path_(std::move(path)) {}
  std::filesystem::path path_;
};

}  // namespace uniheap
