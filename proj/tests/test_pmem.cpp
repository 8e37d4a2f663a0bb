#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "common/error.hpp"
#include "pmem/nvm.hpp"
#include "support/harness.hpp"

using uniheap::ErrorCode;
using uniheap::pmem::CrashPlan;
using uniheap::pmem::FenceSite;
using uniheap::pmem::SimulatedNvm;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const uniheap::Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

std::vector<std::uint8_t> pattern(std::size_t n, std::uint8_t seed) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(seed + i * 7);
  return v;
}

std::vector<std::uint8_t> snapshot(std::span<const std::uint8_t> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("fresh device is zero-filled with zeroed counters") {
  auto dev = SimulatedNvm::create_in_memory(1 << 20);
  CHECK(dev->capacity() == (1u << 20));
  CHECK(dev->fence_count() == 0);
  CHECK(dev->flush_count() == 0);
  auto v = dev->volatile_view();
  CHECK(std::all_of(v.begin(), v.end(), [](auto b) { return b == 0; }));
  auto p = dev->persisted_view();
  CHECK(std::all_of(p.begin(), p.end(), [](auto b) { return b == 0; }));
}

TEST_CASE("capacity must be a positive multiple of the line size") {
  CHECK(code_of([] { SimulatedNvm::create_in_memory(100); }) == ErrorCode::kInvalidCapacity);
  CHECK(code_of([] { SimulatedNvm::create_in_memory(0); }) == ErrorCode::kInvalidCapacity);
  th::TempDir dir;
  CHECK(code_of([&] { SimulatedNvm::create(dir.file("x"), 100); }) == ErrorCode::kInvalidCapacity);
}

TEST_CASE("uncreatable backing path is an I/O error") {
  CHECK(code_of([] { SimulatedNvm::create("/nonexistent-dir/sub/heap", 4096); }) == ErrorCode::kIoError);
}

TEST_CASE("persisted view round-trips through the backing file") {
  th::TempDir dir;
  const auto path = dir.file("dev");
  const auto data = pattern(300, 3);
  {
    auto dev = SimulatedNvm::create(path, 4096);
    dev->write(100, data);
    dev->flush_range(100, data.size());
    dev->fence();
  }
  auto dev = SimulatedNvm::open(path);
  std::vector<std::uint8_t> back(data.size());
  dev->read(100, back);
  CHECK(back == data);
  CHECK(snapshot(dev->persisted_view()) == snapshot(dev->volatile_view()));
}

TEST_CASE("writes land in the volatile view only") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  const auto data = pattern(8, 9);
  dev->write(0, data);
  std::vector<std::uint8_t> back(8);
  dev->read(0, back);
  CHECK(back == data);
  CHECK(dev->persisted_view()[0] == 0);
  CHECK(dev->line_state(0) == SimulatedNvm::LineState::kDirty);
}

TEST_CASE("unflushed writes vanish on crash") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->write_u64(64, 0xdeadbeef);
  dev->crash();
  CHECK(dev->read_u64(64) == 0);
}

TEST_CASE("line arithmetic for dirty and pending sets") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->write(60, pattern(8, 1));
  CHECK(dev->dirty_line_count() == 2);
  CHECK(dev->line_state(0) == SimulatedNvm::LineState::kDirty);
  CHECK(dev->line_state(1) == SimulatedNvm::LineState::kDirty);

  auto dev2 = SimulatedNvm::create_in_memory(4096);
  dev2->write(256, pattern(128, 2));
  dev2->flush_range(256, 128);
  CHECK(dev2->pending_line_count() == 2);
  CHECK(dev2->dirty_line_count() == 0);
  CHECK(dev2->flush_count() == 2);
}

TEST_CASE("flushing a clean range changes nothing") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->flush_range(0, 4096);
  CHECK(dev->flush_count() == 0);
  CHECK(dev->pending_line_count() == 0);
}

TEST_CASE("fence accounting") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->fence();
  CHECK(dev->fence_count() == 1);
  CHECK(dev->persisted_view()[0] == 0);
  for (int i = 0; i < 10; ++i) {
    dev->write_u64(static_cast<std::uint64_t>(i) * 64, static_cast<std::uint64_t>(i) + 1);
    dev->flush_range(static_cast<std::uint64_t>(i) * 64, 8);
    dev->fence(FenceSite::kCommitData);
  }
  CHECK(dev->fence_count() == 11);
  CHECK(dev->fence_count(FenceSite::kCommitData) == 10);
  dev->crash();
  for (int i = 0; i < 10; ++i) CHECK(dev->read_u64(static_cast<std::uint64_t>(i) * 64) == static_cast<std::uint64_t>(i) + 1);
}

TEST_CASE("out-of-range access") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  CHECK(code_of([&] { dev->write(4090, pattern(8, 0)); }) == ErrorCode::kOutOfBounds);
  CHECK(code_of([&] { dev->flush_range(4096, 1); }) == ErrorCode::kOutOfBounds);
  std::vector<std::uint8_t> buf(16);
  CHECK(code_of([&] { dev->read(4088, buf); }) == ErrorCode::kOutOfBounds);
  CHECK(code_of([&] { dev->write(UINT64_MAX - 2, pattern(8, 0)); }) == ErrorCode::kOutOfBounds);
}

TEST_CASE("atomic 8-byte store") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->atomic_write_u64(64, 0x1122334455667788ULL);
  CHECK(dev->read_u64(64) == 0x1122334455667788ULL);
  CHECK(code_of([&] { dev->atomic_write_u64(63, 1); }) == ErrorCode::kMisaligned);
  CHECK(dev->pending_line_count() == 0);  // no implicit flush
  CHECK(dev->fence_count() == 0);
}

TEST_CASE("atomic store across a crash at its fence is old or new, never torn") {
  for (auto retain : {CrashPlan::Retain::kNone, CrashPlan::Retain::kAll}) {
    auto dev = SimulatedNvm::create_in_memory(4096);
    dev->atomic_write_u64(128, 0xAAAAAAAAAAAAAAAAULL);
    dev->flush_range(128, 8);
    dev->fence();
    dev->arm_crash(CrashPlan::at(1, retain));
    dev->atomic_write_u64(128, 0x5555555555555555ULL);
    dev->flush_range(128, 8);
    CHECK_THROWS_AS(dev->fence(), uniheap::CrashInjected);
    CHECK(dev->halted());
    dev->crash();
    const auto v = dev->read_u64(128);
    CHECK(v == (retain == CrashPlan::Retain::kAll ? 0x5555555555555555ULL : 0xAAAAAAAAAAAAAAAAULL));
  }
}

TEST_CASE("halted device ignores further mutation") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->arm_crash(CrashPlan::at(1, CrashPlan::Retain::kAll));
  dev->write_u64(0, 1);
  dev->flush_range(0, 8);
  CHECK_THROWS_AS(dev->fence(), uniheap::CrashInjected);
  CHECK(dev->crash_pending_lines() == 1);
  dev->write_u64(64, 2);
  dev->flush_range(64, 8);
  dev->fence();
  CHECK(dev->fence_count() == 0);
  dev->crash();
  CHECK(dev->read_u64(0) == 1);
  CHECK(dev->read_u64(64) == 0);
  CHECK_FALSE(dev->halted());
}

TEST_CASE("crash with nothing dirty leaves the device unchanged") {
  auto dev = SimulatedNvm::create_in_memory(4096);
  dev->write(0, pattern(200, 5));
  dev->flush_range(0, 200);
  dev->fence();
  const auto before = snapshot(dev->persisted_view());
  dev->crash();
  CHECK(snapshot(dev->persisted_view()) == before);
  CHECK(snapshot(dev->volatile_view()) == before);
}

TEST_CASE("mask plans enumerate every subset of pending lines") {
  std::set<std::uint64_t> outcomes;
  for (unsigned mask = 0; mask < 8; ++mask) {
    auto dev = SimulatedNvm::create_in_memory(4096);
    dev->arm_crash(CrashPlan::with_mask(1, {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0}));
    for (std::uint64_t line = 0; line < 3; ++line) {
      dev->write_u64(line * 64 + 64, line + 1);
      dev->flush_range(line * 64 + 64, 8);
    }
    dev->write_u64(1024, 99);  // dirty, never flushed
    CHECK_THROWS_AS(dev->fence(), uniheap::CrashInjected);
    dev->crash();
    std::uint64_t seen = 0;
    for (std::uint64_t line = 0; line < 3; ++line) {
      const auto v = dev->read_u64(line * 64 + 64);
      CHECK((v == 0 || v == line + 1));
      if (v) seen |= 1u << line;
    }
    CHECK(seen == mask);
    CHECK(dev->read_u64(1024) == 0);
    outcomes.insert(seen);
  }
  CHECK(outcomes.size() == 8);
}

TEST_CASE("crash seed from the environment makes random retention reproducible") {
  auto outcome = [] {
    auto dev = SimulatedNvm::create_in_memory(64 * 64);
    for (std::uint64_t line = 0; line < 32; ++line) {
      dev->write_u64(line * 64, line + 1);
      dev->flush_range(line * 64, 8);
    }
    dev->crash();
    std::vector<std::uint64_t> kept;
    for (std::uint64_t line = 0; line < 32; ++line) kept.push_back(dev->read_u64(line * 64));
    return kept;
  };
  ::setenv("UNIHEAP_CRASH_SEED", "1234", 1);
  const auto a = outcome();
  const auto b = outcome();
  ::unsetenv("UNIHEAP_CRASH_SEED");
  CHECK(a == b);
}

TEST_CASE("read-only device refuses to fence") {
  th::TempDir dir;
  { SimulatedNvm::create(dir.file("d"), 4096); }
  auto dev = SimulatedNvm::open(dir.file("d"), true);
  dev->write_u64(0, 5);
  CHECK(dev->read_u64(0) == 5);
  CHECK(code_of([&] { dev->fence(); }) == ErrorCode::kReadOnly);
  auto again = SimulatedNvm::open(dir.file("d"), true);
  CHECK(again->read_u64(0) == 0);
}

TEST_CASE("crash on a file-backed device rewrites only fenced data") {
  th::TempDir dir;
  const auto path = dir.file("d");
  {
    auto dev = SimulatedNvm::create(path, 4096);
    dev->write_u64(0, 7);
    dev->flush_range(0, 8);
    dev->fence();
    dev->write_u64(64, 8);
    dev->flush_range(64, 8);
    dev->arm_crash(CrashPlan::at(1, CrashPlan::Retain::kNone));
    CHECK_THROWS_AS(dev->fence(), uniheap::CrashInjected);
    dev->crash();
  }
  auto dev = SimulatedNvm::open(path);
  CHECK(dev->read_u64(0) == 7);
  CHECK(dev->read_u64(64) == 0);
}

// Property: random programs of at most 16 writes, each optionally flushed
// and fenced, checked against a line-level reference model after every
// step and after crashes that keep none or all of the pending lines.
TEST_CASE("device matches a reference model on random programs") {
  constexpr std::uint64_t kCap = 1024;
  constexpr std::uint64_t kLines = kCap / 64;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    std::mt19937_64 rng(seed);
    struct Model {
      std::vector<std::uint8_t> vol = std::vector<std::uint8_t>(kCap), pers = std::vector<std::uint8_t>(kCap);
      std::set<std::uint64_t> dirty;
      std::map<std::uint64_t, std::vector<std::uint8_t>> pending;
    } m;
    auto dev = SimulatedNvm::create_in_memory(kCap);
    const int writes = 1 + static_cast<int>(rng() % 16);
    for (int w = 0; w < writes; ++w) {
      const std::uint64_t len = 1 + rng() % 80;
      const std::uint64_t off = rng() % (kCap - len);
      std::vector<std::uint8_t> data(len);
      for (auto& b : data) b = static_cast<std::uint8_t>(rng() | 1);
      const std::uint64_t fences_before = dev->fence_count();
      dev->write(off, data);
      std::copy(data.begin(), data.end(), m.vol.begin() + static_cast<std::ptrdiff_t>(off));
      for (auto l = off / 64; l <= (off + len - 1) / 64; ++l) m.dirty.insert(l);
      CHECK(dev->fence_count() == fences_before);
      if (rng() % 2) {
        const std::uint64_t foff = rng() % kCap;
        const std::uint64_t flen = 1 + rng() % (kCap - foff);
        dev->flush_range(foff, flen);
        for (auto l = foff / 64; l <= (foff + flen - 1) / 64; ++l) {
          if (m.dirty.erase(l)) {
            m.pending[l] = std::vector<std::uint8_t>(m.vol.begin() + static_cast<std::ptrdiff_t>(l * 64),
                                                     m.vol.begin() + static_cast<std::ptrdiff_t>(l * 64 + 64));
          }
        }
      }
      if (rng() % 3 == 0) {
        dev->fence();
        for (const auto& [l, bytes] : m.pending)
          std::copy(bytes.begin(), bytes.end(), m.pers.begin() + static_cast<std::ptrdiff_t>(l * 64));
        m.pending.clear();
      }
      REQUIRE(snapshot(dev->volatile_view()) == m.vol);
      REQUIRE(snapshot(dev->persisted_view()) == m.pers);
      CHECK(dev->dirty_line_count() == m.dirty.size());
      CHECK(dev->pending_line_count() == m.pending.size());
      for (std::uint64_t l = 0; l < kLines; ++l) {
        const bool differs = !std::equal(m.vol.begin() + static_cast<std::ptrdiff_t>(l * 64),
                                         m.vol.begin() + static_cast<std::ptrdiff_t>(l * 64 + 64),
                                         dev->persisted_view().begin() + static_cast<std::ptrdiff_t>(l * 64));
        if (differs) CHECK((m.dirty.count(l) || m.pending.count(l)));
      }
    }
    const bool keep_all = seed % 2;
    dev->arm_crash(CrashPlan::at(0, keep_all ? CrashPlan::Retain::kAll : CrashPlan::Retain::kNone));
    dev->crash();
    auto expect = m.pers;
    if (keep_all)
      for (const auto& [l, bytes] : m.pending)
        std::copy(bytes.begin(), bytes.end(), expect.begin() + static_cast<std::ptrdiff_t>(l * 64));
    CHECK(snapshot(dev->persisted_view()) == expect);
    CHECK(snapshot(dev->volatile_view()) == expect);
  }
}
