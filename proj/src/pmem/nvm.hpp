#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace uniheap::pmem {

inline constexpr std::uint64_t kLineSize = 64;

/// Where a fence was issued from. Used only for the per-site breakdown; every
/// fence counts once toward the global total regardless of site.
enum class FenceSite : std::uint8_t {
  kOther,
  kCreate,
  kHeader,
  kPlass,
  kRoot,
  kCommitData,
  kCommitRecord,
  kAtomicUpdate,
  kBaseline,
  kGc,
  kRecovery,
  kCount,
};

std::string_view fence_site_name(FenceSite site) noexcept;

/// Schedule for an injected power failure.
///
/// When armed, the device counts fences from the moment of arming. The fence
/// whose ordinal equals `at_fence` never happens: the device throws
/// CrashInjected instead and halts. A later crash() decides which of the
/// flushed-but-unfenced lines survive according to `retain`.
struct CrashPlan {
  enum class Retain { kRandom, kAll, kNone, kMask };

  std::uint64_t at_fence = 0;  // 1-based; 0 never fires
  Retain retain = Retain::kRandom;
  std::uint64_t seed = 0;
  std::vector<bool> mask;  // kMask: bit i keeps the i-th pending line, ascending line order

  static CrashPlan at(std::uint64_t fence, Retain retain = Retain::kRandom, std::uint64_t seed = 0) {
    CrashPlan plan;
    plan.at_fence = fence;
    plan.retain = retain;
    plan.seed = seed;
    return plan;
  }
  static CrashPlan with_mask(std::uint64_t fence, std::vector<bool> keep) {
    CrashPlan plan;
    plan.at_fence = fence;
    plan.retain = Retain::kMask;
    plan.mask = std::move(keep);
    return plan;
  }
};

/// A byte-addressable persistent-memory device with an explicit split between
/// what the CPU sees (volatile view) and what survives power loss (persisted
/// view). Stores land in the volatile view and dirty their 64-byte lines;
/// flush_range snapshots dirty lines into a pending set; fence copies the
/// pending snapshots into the persisted view (and the backing file).
///
/// Mutations are serialized internally. read() is not: callers must not read
/// a range that another thread is writing at the same time.
class SimulatedNvm {
 public:
  enum class LineState : std::uint8_t { kClean = 0, kDirty = 1, kPending = 2, kDirtyPending = 3 };

  /// Creates a zero-filled device backed by `path` (truncated/created).
  static std::shared_ptr<SimulatedNvm> create(const std::filesystem::path& path, std::uint64_t capacity);
  /// Creates a zero-filled device with no backing file.
  static std::shared_ptr<SimulatedNvm> create_in_memory(std::uint64_t capacity);
  /// Opens an existing backing file; both views start as the file contents.
  static std::shared_ptr<SimulatedNvm> open(const std::filesystem::path& path, bool read_only = false);
  /// In-memory device whose both views equal `image`.
  static std::shared_ptr<SimulatedNvm> from_image(std::span<const std::uint8_t> image);

  SimulatedNvm(const SimulatedNvm&) = delete;
  SimulatedNvm& operator=(const SimulatedNvm&) = delete;
  ~SimulatedNvm();

  std::uint64_t capacity() const noexcept { return capacity_; }
  const std::filesystem::path& path() const noexcept { return path_; }
  bool read_only() const noexcept { return read_only_; }
  bool in_memory() const noexcept { return fd_ < 0; }

  void read(std::uint64_t offset, std::span<std::uint8_t> out) const;
  std::uint64_t read_u64(std::uint64_t offset) const;
  std::uint32_t read_u32(std::uint64_t offset) const;
  std::span<const std::uint8_t> volatile_view() const noexcept { return volatile_; }
  std::span<const std::uint8_t> persisted_view() const noexcept { return persisted_; }

  void write(std::uint64_t offset, std::span<const std::uint8_t> data);
  void write_u32(std::uint64_t offset, std::uint32_t value);
  void write_u64(std::uint64_t offset, std::uint64_t value);
  /// Zeroes a range, dirtying only lines that held nonzero bytes.
  void zero_range(std::uint64_t offset, std::uint64_t len);
  /// Single-unit 8-byte store; never torn by a crash. Does not flush.
  void atomic_write_u64(std::uint64_t offset, std::uint64_t value);

  void flush_range(std::uint64_t offset, std::uint64_t len);
  void fence(FenceSite site = FenceSite::kOther);

  /// Power failure. Dirty lines are lost; each pending line survives or not
  /// per the armed plan (or a seeded random choice when none is armed). The
  /// volatile view is reset to the resulting persisted view.
  void crash();

  void arm_crash(CrashPlan plan);
  void disarm_crash();
  bool halted() const noexcept { return halted_; }
  /// Pending-line count observed when the armed crash fired.
  std::size_t crash_pending_lines() const noexcept { return crash_pending_lines_; }

  std::uint64_t fence_count() const noexcept;
  std::uint64_t fence_count(FenceSite site) const noexcept;
  std::uint64_t flush_count() const noexcept;
  std::size_t dirty_line_count() const;
  std::size_t pending_line_count() const;
  LineState line_state(std::uint64_t line) const;

 private:
  SimulatedNvm(std::filesystem::path path, int fd, std::uint64_t capacity, bool read_only);

  void check_range(std::uint64_t offset, std::uint64_t len) const;
  void mark_dirty(std::uint64_t offset, std::uint64_t len);
  void persist_line(std::uint64_t line, const std::uint8_t* bytes);
  void write_file(std::uint64_t offset, const std::uint8_t* bytes, std::uint64_t len);

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t capacity_ = 0;
  bool read_only_ = false;

  mutable std::mutex mu_;
  std::vector<std::uint8_t> volatile_;
  std::vector<std::uint8_t> persisted_;
  std::vector<std::uint8_t> line_flags_;  // bit0 dirty, bit1 pending
  std::size_t dirty_lines_ = 0;
  std::map<std::uint64_t, std::array<std::uint8_t, kLineSize>> pending_;

  std::array<std::uint64_t, static_cast<std::size_t>(FenceSite::kCount)> fences_{};
  std::uint64_t flushes_ = 0;

  bool armed_ = false;
  CrashPlan plan_;
  std::uint64_t fences_since_arm_ = 0;
  std::atomic<bool> halted_{false};
  std::size_t crash_pending_lines_ = 0;
  std::mt19937_64 crash_rng_;
};

}  // namespace uniheap::pmem
