#include "pmem/nvm.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <string>

#include "common/error.hpp"

namespace uniheap::pmem {

namespace {

constexpr std::uint8_t kDirtyBit = 1;
constexpr std::uint8_t kPendingBit = 2;

std::uint64_t seed_from_env() {
  if (const char* env = std::getenv("UNIHEAP_CRASH_SEED")) {
    char* end = nullptr;
    const auto value = std::strtoull(env, &end, 0);
    if (end != env) return value;
  }
  return 0;
}

std::string errno_text(const std::filesystem::path& path) {
  return path.string() + ": " + std::strerror(errno);
}

}  // namespace

std::string_view fence_site_name(FenceSite site) noexcept {
  switch (site) {
    case FenceSite::kOther: return "other";
    case FenceSite::kCreate: return "create";
    case FenceSite::kHeader: return "header";
    case FenceSite::kPlass: return "plass";
    case FenceSite::kRoot: return "root";
    case FenceSite::kCommitData: return "commit_data";
    case FenceSite::kCommitRecord: return "commit_record";
    case FenceSite::kAtomicUpdate: return "atomic_update";
    case FenceSite::kBaseline: return "baseline";
    case FenceSite::kGc: return "gc";
    case FenceSite::kRecovery: return "recovery";
    case FenceSite::kCount: break;
  }
  return "unknown";
}

SimulatedNvm::SimulatedNvm(std::filesystem::path path, int fd, std::uint64_t capacity, bool read_only)
    : path_(std::move(path)),
      fd_(fd),
      capacity_(capacity),
      read_only_(read_only),
      volatile_(capacity, 0),
      persisted_(capacity, 0),
      line_flags_(capacity / kLineSize, 0),
      crash_rng_(seed_from_env()) {}

SimulatedNvm::~SimulatedNvm() {
  if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<SimulatedNvm> SimulatedNvm::create(const std::filesystem::path& path, std::uint64_t capacity) {
  if (capacity == 0 || capacity % kLineSize != 0)
    fail(ErrorCode::kInvalidCapacity, "capacity must be a positive multiple of 64, got " + std::to_string(capacity));
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::kIoError, errno_text(path));
  if (::ftruncate(fd, static_cast<off_t>(capacity)) != 0) {
    ::close(fd);
    fail(ErrorCode::kIoError, errno_text(path));
  }
  return std::shared_ptr<SimulatedNvm>(new SimulatedNvm(path, fd, capacity, false));
}

std::shared_ptr<SimulatedNvm> SimulatedNvm::create_in_memory(std::uint64_t capacity) {
  if (capacity == 0 || capacity % kLineSize != 0)
    fail(ErrorCode::kInvalidCapacity, "capacity must be a positive multiple of 64, got " + std::to_string(capacity));
  return std::shared_ptr<SimulatedNvm>(new SimulatedNvm({}, -1, capacity, false));
}

std::shared_ptr<SimulatedNvm> SimulatedNvm::open(const std::filesystem::path& path, bool read_only) {
  const int fd = ::open(path.c_str(), (read_only ? O_RDONLY : O_RDWR) | O_CLOEXEC);
  if (fd < 0) fail(ErrorCode::kIoError, errno_text(path));
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    fail(ErrorCode::kIoError, errno_text(path));
  }
  const auto capacity = static_cast<std::uint64_t>(st.st_size);
  if (capacity == 0 || capacity % kLineSize != 0) {
    ::close(fd);
    fail(ErrorCode::kInvalidCapacity, path.string() + ": image size " + std::to_string(capacity) +
                                          " is not a positive multiple of 64");
  }
  std::shared_ptr<SimulatedNvm> dev(new SimulatedNvm(path, fd, capacity, read_only));
  std::uint64_t done = 0;
  while (done < capacity) {
    const auto n = ::pread(fd, dev->persisted_.data() + done, capacity - done, static_cast<off_t>(done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::kIoError, errno_text(path));
    done += static_cast<std::uint64_t>(n);
  }
  dev->volatile_ = dev->persisted_;
  return dev;
}

std::shared_ptr<SimulatedNvm> SimulatedNvm::from_image(std::span<const std::uint8_t> image) {
  auto dev = create_in_memory(image.size());
  std::copy(image.begin(), image.end(), dev->persisted_.begin());
  dev->volatile_ = dev->persisted_;
  return dev;
}

void SimulatedNvm::check_range(std::uint64_t offset, std::uint64_t len) const {
  if (offset > capacity_ || len > capacity_ - offset)
    fail(ErrorCode::kOutOfBounds, "range [" + std::to_string(offset) + ", +" + std::to_string(len) +
                                      ") exceeds capacity " + std::to_string(capacity_));
}

void SimulatedNvm::read(std::uint64_t offset, std::span<std::uint8_t> out) const {
  check_range(offset, out.size());
  std::memcpy(out.data(), volatile_.data() + offset, out.size());
}

std::uint64_t SimulatedNvm::read_u64(std::uint64_t offset) const {
  std::uint64_t v = 0;
  read(offset, {reinterpret_cast<std::uint8_t*>(&v), sizeof v});
  return v;
}

std::uint32_t SimulatedNvm::read_u32(std::uint64_t offset) const {
  std::uint32_t v = 0;
  read(offset, {reinterpret_cast<std::uint8_t*>(&v), sizeof v});
  return v;
}

void SimulatedNvm::mark_dirty(std::uint64_t offset, std::uint64_t len) {
  if (len == 0) return;
  const auto first = offset / kLineSize;
  const auto last = (offset + len - 1) / kLineSize;
  for (auto line = first; line <= last; ++line) {
    if (!(line_flags_[line] & kDirtyBit)) {
      line_flags_[line] |= kDirtyBit;
      ++dirty_lines_;
    }
  }
}

void SimulatedNvm::write(std::uint64_t offset, std::span<const std::uint8_t> data) {
  check_range(offset, data.size());
  std::lock_guard lock(mu_);
  if (halted_) return;
  std::memcpy(volatile_.data() + offset, data.data(), data.size());
  mark_dirty(offset, data.size());
}

void SimulatedNvm::write_u32(std::uint64_t offset, std::uint32_t value) {
  write(offset, {reinterpret_cast<const std::uint8_t*>(&value), sizeof value});
}

void SimulatedNvm::write_u64(std::uint64_t offset, std::uint64_t value) {
  write(offset, {reinterpret_cast<const std::uint8_t*>(&value), sizeof value});
}

void SimulatedNvm::zero_range(std::uint64_t offset, std::uint64_t len) {
  check_range(offset, len);
  std::lock_guard lock(mu_);
  if (halted_) return;
  auto pos = offset;
  const auto end = offset + len;
  while (pos < end) {
    const auto line_end = std::min(end, (pos / kLineSize + 1) * kLineSize);
    auto* begin = volatile_.data() + pos;
    auto* stop = volatile_.data() + line_end;
    if (std::any_of(begin, stop, [](std::uint8_t b) { return b != 0; })) {
      std::fill(begin, stop, 0);
      mark_dirty(pos, line_end - pos);
    }
    pos = line_end;
  }
}

void SimulatedNvm::atomic_write_u64(std::uint64_t offset, std::uint64_t value) {
  if (offset % 8 != 0) fail(ErrorCode::kMisaligned, "atomic 8-byte store at offset " + std::to_string(offset));
  // An aligned 8-byte word never straddles a line, and lines persist as units.
  write_u64(offset, value);
}

void SimulatedNvm::flush_range(std::uint64_t offset, std::uint64_t len) {
  check_range(offset, len);
  if (len == 0) return;
  std::lock_guard lock(mu_);
  if (halted_) return;
  const auto first = offset / kLineSize;
  const auto last = (offset + len - 1) / kLineSize;
  for (auto line = first; line <= last; ++line) {
    if (!(line_flags_[line] & kDirtyBit)) continue;
    auto& snapshot = pending_[line];
    std::memcpy(snapshot.data(), volatile_.data() + line * kLineSize, kLineSize);
    line_flags_[line] = static_cast<std::uint8_t>((line_flags_[line] & ~kDirtyBit) | kPendingBit);
    --dirty_lines_;
    ++flushes_;
  }
}

void SimulatedNvm::write_file(std::uint64_t offset, const std::uint8_t* bytes, std::uint64_t len) {
  if (fd_ < 0) return;
  std::uint64_t done = 0;
  while (done < len) {
    const auto n = ::pwrite(fd_, bytes + done, len - done, static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::kIoError, errno_text(path_));
    done += static_cast<std::uint64_t>(n);
  }
}

void SimulatedNvm::persist_line(std::uint64_t line, const std::uint8_t* bytes) {
  std::memcpy(persisted_.data() + line * kLineSize, bytes, kLineSize);
  line_flags_[line] &= static_cast<std::uint8_t>(~kPendingBit);
}

void SimulatedNvm::fence(FenceSite site) {
  std::lock_guard lock(mu_);
  if (halted_) return;
  if (read_only_) fail(ErrorCode::kReadOnly, "fence on a read-only device");
  if (armed_ && ++fences_since_arm_ == plan_.at_fence) {
    halted_ = true;
    crash_pending_lines_ = pending_.size();
    throw CrashInjected("injected crash at fence " + std::to_string(plan_.at_fence) + " (" +
                        std::string(fence_site_name(site)) + ")");
  }
  // Coalesce adjacent lines into single file writes.
  std::uint64_t run_start = 0;
  std::uint64_t run_len = 0;
  for (const auto& [line, bytes] : pending_) {
    persist_line(line, bytes.data());
    if (run_len != 0 && line == run_start + run_len) {
      ++run_len;
      continue;
    }
    if (run_len != 0) write_file(run_start * kLineSize, persisted_.data() + run_start * kLineSize, run_len * kLineSize);
    run_start = line;
    run_len = 1;
  }
  if (run_len != 0) write_file(run_start * kLineSize, persisted_.data() + run_start * kLineSize, run_len * kLineSize);
  pending_.clear();
  ++fences_[static_cast<std::size_t>(site)];
}

void SimulatedNvm::crash() {
  std::lock_guard lock(mu_);
  std::vector<bool> keep(pending_.size(), false);
  const auto retain = armed_ ? plan_.retain : CrashPlan::Retain::kRandom;
  std::mt19937_64 seeded(plan_.seed);
  auto& rng = armed_ ? seeded : crash_rng_;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    switch (retain) {
      case CrashPlan::Retain::kAll: keep[i] = true; break;
      case CrashPlan::Retain::kNone: keep[i] = false; break;
      case CrashPlan::Retain::kMask: keep[i] = i < plan_.mask.size() && plan_.mask[i]; break;
      case CrashPlan::Retain::kRandom: keep[i] = (rng() & 1) != 0; break;
    }
  }
  std::size_t i = 0;
  for (const auto& [line, bytes] : pending_) {
    if (keep[i++]) {
      persist_line(line, bytes.data());
      write_file(line * kLineSize, bytes.data(), kLineSize);
    }
  }
  pending_.clear();
  volatile_ = persisted_;
  std::fill(line_flags_.begin(), line_flags_.end(), 0);
  dirty_lines_ = 0;
  armed_ = false;
  halted_ = false;
}

void SimulatedNvm::arm_crash(CrashPlan plan) {
  std::lock_guard lock(mu_);
  plan_ = std::move(plan);
  armed_ = plan_.at_fence != 0 || plan_.retain != CrashPlan::Retain::kRandom || plan_.seed != 0;
  fences_since_arm_ = 0;
  crash_pending_lines_ = 0;
}

void SimulatedNvm::disarm_crash() {
  std::lock_guard lock(mu_);
  armed_ = false;
  plan_ = {};
}

std::uint64_t SimulatedNvm::fence_count() const noexcept {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (auto n : fences_) total += n;
  return total;
}

std::uint64_t SimulatedNvm::fence_count(FenceSite site) const noexcept {
  std::lock_guard lock(mu_);
  return fences_[static_cast<std::size_t>(site)];
}

std::uint64_t SimulatedNvm::flush_count() const noexcept {
  std::lock_guard lock(mu_);
  return flushes_;
}

std::size_t SimulatedNvm::dirty_line_count() const {
  std::lock_guard lock(mu_);
  return dirty_lines_;
}

std::size_t SimulatedNvm::pending_line_count() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

SimulatedNvm::LineState SimulatedNvm::line_state(std::uint64_t line) const {
  std::lock_guard lock(mu_);
  if (line >= line_flags_.size()) fail(ErrorCode::kOutOfBounds, "line " + std::to_string(line));
  return static_cast<LineState>(line_flags_[line]);
}

}  // namespace uniheap::pmem
