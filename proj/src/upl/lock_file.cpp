#include "upl/lock_file.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <string>

#include "common/error.hpp"

namespace uniheap {

namespace {

bool pid_alive(long pid) {
  if (pid <= 0) return false;
  if (::kill(static_cast<pid_t>(pid), 0) == 0) return true;
  return errno == EPERM;
}

long read_pid(const std::filesystem::path& path) {
  std::ifstream in(path);
  long pid = 0;
  in >> pid;
  return in ? pid : 0;
}

}  // namespace

std::filesystem::path LockFile::path_for(const std::filesystem::path& heap_path) {
  auto p = heap_path;
  p += ".lock";
  return p;
}

std::unique_ptr<LockFile> LockFile::acquire(const std::filesystem::path& heap_path, bool force) {
  const auto path = path_for(heap_path);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd >= 0) {
      const auto text = std::to_string(::getpid()) + "\n";
      const bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
      ::close(fd);
      if (!ok) {
        std::filesystem::remove(path);
        fail(ErrorCode::kIoError, "cannot write " + path.string());
      }
      return std::unique_ptr<LockFile>(new LockFile(path));
    }
    if (errno != EEXIST) fail(ErrorCode::kIoError, path.string() + ": " + std::strerror(errno));
    const auto owner = read_pid(path);
    if (pid_alive(owner))
      fail(ErrorCode::kLockHeld, "heap is held by process " + std::to_string(owner) + " (" + path.string() + ")");
    if (!force)
      fail(ErrorCode::kLockHeld, "stale lock from process " + std::to_string(owner) + "; reopen with force (" +
                                     path.string() + ")");
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  fail(ErrorCode::kLockHeld, "could not take over " + path.string());
}

LockFile::~LockFile() {
  if (path_.empty()) return;
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace uniheap
