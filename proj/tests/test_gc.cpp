#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "support/harness.hpp"
#include "support/oracle.hpp"
#include "support/random_heap.hpp"

using namespace uniheap;
using pmem::CrashPlan;
using th::code_of;
using rh::forwarded;
using rh::headers_without_versions;
using rh::node_fields;
using rh::random_heap;


TEST_CASE("unreachable objects are reclaimed") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Node", node_fields());
  ObjectRef a, b, c;
  th::commit(*s, [&](Transaction& tx) {
    a = tx.alloc(p);
    b = tx.alloc(p);
    c = tx.alloc(p);
    tx.write(a, 1, Value::of_ref(b));
    tx.write(b, 0, Value::of_long(5));
    tx.write(c, 0, Value::of_long(6));
  });
  s->set_root("root", a);
  const auto before = th::canonical(*s);
  const auto rep = s->request_gc();
  CHECK(rep.live == 2);
  CHECK(rep.reclaimed == 1);
  CHECK(rep.epoch == 1);
  CHECK(th::canonical(*s) == before);
  // New bitmap holds exactly ids 1 and 2; chunk 3 (old C) is clear.
  const auto img = s->device().persisted_view();
  const auto h = oracle::read_header(img);
  CHECK(h.epoch == 1);
  CHECK(h.gc_phase == 0);
  CHECK(img[h.bitmap().offset] == 0b011);
  CHECK_FALSE(s->heap().bitmap_bit(ObjectRef{3}));
  CHECK_FALSE(s->heap().objects().is_live(ObjectRef{3}));
}

TEST_CASE("collecting an empty heap still advances the epoch") {
  auto s = th::fresh();
  auto rep = s->request_gc();
  CHECK(rep.live == 0);
  CHECK(rep.reclaimed == 0);
  CHECK(rep.log_bytes_after == 0);
  CHECK(s->heap().active_epoch() == 1);
  rep = s->request_gc();
  CHECK(s->heap().active_epoch() == 2);
  CHECK(rep.epoch == 2);
}

TEST_CASE("a GC costs a fixed number of fences") {
  auto s = th::fresh();
  const auto f0 = s->fence_count();
  s->request_gc();
  CHECK(s->fence_count() - f0 == 8);
}

TEST_CASE("updates are coalesced into one checkpoint value per field") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Counter", th::longs({"n", "unused"}));
  ObjectRef r;
  th::commit(*s, [&](Transaction& tx) { r = tx.alloc(p); });
  for (int i = 1; i <= 100; ++i) th::commit(*s, [&](Transaction& tx) { tx.write(r, 0, Value::of_long(i)); });
  s->set_root("c", r);
  const auto rep = s->request_gc();
  CHECK(rep.log_bytes_before == 40 * 2 + 100 * 80);
  CHECK(rep.log_bytes_after == 80);
  CHECK(rep.checkpoint_values == 1);
  const auto entries = oracle::scan_log(s->device().persisted_view());
  std::size_t hdrs = 0, vals = 0;
  for (const auto& e : entries) {
    CHECK(e.crc_ok);
    CHECK(e.tx == 0);
    if (e.kind == 4) {
      ++hdrs;
      CHECK(e.field == 2);
    }
    if (e.kind == 5) {
      ++vals;
      CHECK(e.value == 100);
      CHECK(e.field == 0);
    }
  }
  CHECK(hdrs == 1);
  CHECK(vals == 1);
  CHECK(s->read_field(*s->get_root("c"), 0).as_long() == 100);
  CHECK(s->read_field(*s->get_root("c"), 1).as_long() == 0);
}

TEST_CASE("objects with no written fields keep reading zeros") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Blank", th::longs({"a", "b", "c"}));
  ObjectRef r;
  th::commit(*s, [&](Transaction& tx) { r = tx.alloc(p); });
  s->set_root("blank", r);
  const auto rep = s->request_gc();
  CHECK(rep.checkpoint_values == 0);
  const auto entries = oracle::scan_log(s->device().persisted_view());
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].kind == 4);
  CHECK(entries[0].field == 3);
  for (std::uint32_t i = 0; i < 3; ++i) CHECK(s->read_field(*s->get_root("blank"), i).as_long() == 0);
}

TEST_CASE("marking handles cycles and is repeatable") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Node", node_fields());
  ObjectRef a, b, lone;
  th::commit(*s, [&](Transaction& tx) {
    a = tx.alloc(p);
    b = tx.alloc(p);
    lone = tx.alloc(p);
    tx.write(a, 1, Value::of_ref(b));
    tx.write(b, 1, Value::of_ref(a));
  });
  s->set_root("cycle", a);
  const auto m1 = s->collector().mark({});
  const auto m2 = s->collector().mark({});
  CHECK(m1 == m2);
  CHECK(m1[a.chunk()]);
  CHECK(m1[b.chunk()]);
  CHECK_FALSE(m1[lone.chunk()]);
  const auto with_vroot = s->collector().mark({lone});
  CHECK(with_vroot[lone.chunk()]);
  const auto rep = s->request_gc();
  CHECK(rep.live == 2);
  const auto root = *s->get_root("cycle");
  const auto other = s->read_field(root, 1).as_ref();
  CHECK(s->read_field(other, 1).as_ref() == root);
}

TEST_CASE("sliding relocation") {
  std::vector<bool> marks(10, false);
  marks[1] = marks[4] = marks[8] = true;  // ids 2, 5, 9
  const auto fwd = Collector::relocate(marks);
  CHECK(fwd[1] == 1);
  CHECK(fwd[4] == 2);
  CHECK(fwd[8] == 3);
  CHECK(std::count(fwd.begin(), fwd.end(), 0u) == 7);
  CHECK(Collector::relocate(marks) == fwd);
  std::vector<bool> all(5, true);
  const auto id = Collector::relocate(all);
  for (std::size_t i = 0; i < 5; ++i) CHECK(id[i] == i + 1);
}

TEST_CASE("vroots keep objects alive and runtimes learn the forwarding") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Node", node_fields());
  std::vector<ObjectRef> objs;
  th::commit(*s, [&](Transaction& tx) {
    for (int i = 0; i < 9; ++i) {
      objs.push_back(tx.alloc(p));
      tx.write(objs.back(), 0, Value::of_long(i));
    }
  });
  // Three runtimes each hold one object; nothing is rooted durably.
  std::vector<ObjectRef> held = {objs[1], objs[4], objs[8]};
  std::vector<std::uint64_t> ids;
  int relocations = 0;
  for (int rt = 0; rt < 3; ++rt)
    ids.push_back(s->register_runtime([&, rt] { return std::vector<ObjectRef>{held[rt]}; },
                                      [&, rt](std::span<const std::uint64_t> fwd) {
                                        held[rt] = ObjectRef{fwd[held[rt].chunk()]};
                                        ++relocations;
                                      }));
  CHECK(s->collector().runtime_count() == 3);
  auto rep = s->request_gc();
  CHECK(rep.live == 3);
  CHECK(relocations == 3);
  CHECK(held == std::vector<ObjectRef>{{1}, {2}, {3}});
  CHECK(s->read_field(held[0], 0).as_long() == 1);
  CHECK(s->read_field(held[1], 0).as_long() == 4);
  CHECK(s->read_field(held[2], 0).as_long() == 8);

  s->unregister_runtime(ids[1]);
  rep = s->request_gc();
  CHECK(rep.live == 2);
  CHECK(relocations == 5);
  CHECK(s->read_field(held[2], 0).as_long() == 8);
}

TEST_CASE("an invalid vroot fails the collection before any change") {
  auto s = th::fresh();
  const PlassId p = s->init_plass("Node", node_fields());
  ObjectRef a;
  th::commit(*s, [&](Transaction& tx) { a = tx.alloc(p); });
  s->set_root("a", a);
  const auto id = s->register_runtime([] { return std::vector<ObjectRef>{ObjectRef{42}}; });
  const auto f0 = s->fence_count();
  CHECK(code_of([&] { s->request_gc(); }) == ErrorCode::kInvalidVroot);
  CHECK(s->fence_count() == f0);
  CHECK(s->heap().active_epoch() == 0);
  s->unregister_runtime(id);
  CHECK(s->request_gc().live == 1);
}

TEST_CASE("a second collection during one is refused") {
  auto s = th::fresh();
  ErrorCode inner = ErrorCode::kOk;
  s->register_runtime({}, [&](std::span<const std::uint64_t>) {
    inner = code_of([&] { s->collector().request_gc(); });
  });
  s->request_gc();
  CHECK(inner == ErrorCode::kGcAlreadyRunning);
  auto tx = s->atomic_begin();
  CHECK(code_of([&] { s->request_gc(); }) == ErrorCode::kNestedTransaction);
}

// Property: GC preserves the labelled graph reachable from roots and vroots,
// and an object survives iff an independent BFS reaches it.
TEST_CASE("graph preservation and exact reclamation on random heaps") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 1 + seed * 13 % 300;
    auto h = random_heap(seed, n);
    const auto expect = th::canonical(*h.s, h.vroots);
    const auto reach = th::reachable(*h.s, h.vroots, h.s->heap().next_header_index());
    std::vector<std::uint64_t> fwd;
    h.s->register_runtime([&] { return h.vroots; },
                          [&](std::span<const std::uint64_t> f) { fwd.assign(f.begin(), f.end()); });
    const auto rep = h.s->request_gc();
    // Compaction never needs more log than it started from.
    CHECK(rep.log_bytes_after <= rep.log_bytes_before);
    const auto live = static_cast<std::uint64_t>(std::count(reach.begin() + 1, reach.end(), true));
    CHECK(rep.live == live);
    CHECK(rep.reclaimed == n - live);
    for (std::uint64_t id = 1; id <= n; ++id) CHECK((fwd[id - 1] != 0) == reach[id]);
    const auto moved_vroots = forwarded(h.vroots, fwd);
    CHECK(th::canonical(*h.s, moved_vroots) == expect);
    // Survives a reopen as well (vroots are volatile; compare rooted part).
    const auto rooted = th::canonical(*h.s);
    auto again = th::reopen(h.s);
    CHECK(th::canonical(*again) == rooted);
  }
}

TEST_CASE("graph preservation at ten thousand objects") {
  auto h = random_heap(99, 10000, 32ull << 20);
  const auto expect = th::canonical(*h.s, h.vroots);
  std::vector<std::uint64_t> fwd;
  h.s->register_runtime([&] { return h.vroots; },
                        [&](std::span<const std::uint64_t> f) { fwd.assign(f.begin(), f.end()); });
  h.s->request_gc();
  CHECK(th::canonical(*h.s, forwarded(h.vroots, fwd)) == expect);
}

// Headers live only in the object space and values only in the log.
TEST_CASE("metadata and data stay decoupled after collection") {
  auto h = random_heap(5, 200);
  h.s->register_runtime([&] { return h.vroots; });
  const auto rep = h.s->request_gc();
  const auto img = h.s->device().persisted_view();
  const auto hd = oracle::read_header(img);
  const auto entries = oracle::scan_log(img);
  std::uint64_t hdrs = 0;
  for (const auto& e : entries) {
    CHECK(e.crc_ok);
    CHECK((e.kind == 4 || e.kind == 5));
    if (e.kind == 4) ++hdrs;
  }
  CHECK(hdrs == rep.live);
  CHECK(entries.size() * 40 == rep.log_bytes_after);
  for (std::uint64_t i = 0; i < hd.objects().length / 16; ++i) {
    const auto off = hd.objects().offset + i * 16;
    const auto plass = oracle::u32(img, off);
    if (i < rep.live) {
      CHECK(plass >= 1);
      CHECK(plass <= 2);
      CHECK((oracle::u32(img, off + 4) & 0x80000000u) == 0);
      CHECK(oracle::u32(img, off + 12) == 0);
    } else {
      CHECK(oracle::all_zero(img, off, 16));
    }
  }
}

namespace {

// Fences issued by one collection of the heap built by `seed`.
std::uint64_t gc_fences(std::uint64_t seed, std::size_t n) {
  auto h = random_heap(seed, n);
  const auto f0 = h.s->fence_count();
  h.s->request_gc();
  return h.s->fence_count() - f0;
}

}  // namespace


// Property: a crash at any GC fence, with any subset of pending lines kept,
// recovers to the post-GC heap once the collection has durably begun, and to
// the untouched heap otherwise. Either way the reachable graph is unchanged,
// and a completed collection leaves the active spaces byte-identical to an
// uninterrupted run.
TEST_CASE("crash at every GC fence converges to the collected heap") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const std::size_t n = 50;
    std::string expect;
    std::vector<std::uint8_t> clean_objects, clean_log;
    {
      auto h = random_heap(seed, n);
      h.s->request_gc();
      expect = th::canonical(*h.s);
      const auto img = h.s->device().persisted_view();
      const auto hd = oracle::read_header(img);
      clean_objects = headers_without_versions(img, hd.objects());
      clean_log.assign(img.begin() + static_cast<std::ptrdiff_t>(hd.log().offset),
                       img.begin() + static_cast<std::ptrdiff_t>(hd.log().offset + hd.log().length));
    }
    const auto total = gc_fences(seed, n);
    REQUIRE(total == 8);
    for (std::uint64_t k = 1; k <= total; ++k) {
      for (int mode = 0; mode < 4; ++mode) {
        CAPTURE(seed);
        CAPTURE(k);
        CAPTURE(mode);
        auto h = random_heap(seed, n);
        const auto retain = mode == 0   ? CrashPlan::Retain::kNone
                            : mode == 1 ? CrashPlan::Retain::kAll
                                        : CrashPlan::Retain::kRandom;
        h.s->device().arm_crash(CrashPlan::at(k, retain, seed * 31 + static_cast<std::uint64_t>(mode)));
        CHECK_THROWS_AS(h.s->request_gc(), CrashInjected);
        auto dev = h.s->device_ptr();
        h.s->abandon();
        h.s.reset();
        dev->crash();
        const auto at_crash = oracle::read_header(dev->persisted_view());
        const bool begun = at_crash.gc_phase != 0 || at_crash.epoch != 0;
        if (k >= 2) CHECK(begun);
        auto again = Session::open_on(dev, th::quiet());
        CHECK(again->heap().gc_phase() == GcPhase::kIdle);
        CHECK(again->heap().active_epoch() == (begun ? 1u : 0u));
        // Before cleanup the whole collection is redone; from cleanup on it is finished.
        CHECK(again->recovery().gc_redone == (at_crash.gc_phase >= 1 && at_crash.gc_phase <= 3));
        CHECK(again->recovery().cleanup_completed == (at_crash.gc_phase == 4));
        CHECK(th::canonical(*again) == expect);
        if (begun) {
          const auto img = again->device().persisted_view();
          const auto hd = oracle::read_header(img);
          CHECK(headers_without_versions(img, hd.objects()) == clean_objects);
          CHECK(std::equal(clean_log.begin(), clean_log.end(), img.begin() + static_cast<std::ptrdiff_t>(hd.log().offset)));
        }
        // Recovering twice changes nothing.
        auto twice = th::crash_and_reopen(again);
        CHECK(th::canonical(*twice) == expect);
      }
    }
  }
}

TEST_CASE("automatic collection at the occupancy threshold") {
  Geometry g;
  g.log_segment_bytes = 40 * 64;
  HeapOptions o;
  o.auto_gc = true;
  auto s = th::fresh(1 << 20, o, g);
  const PlassId p = s->init_plass("Counter", th::longs({"n"}));
  ObjectRef r;
  th::commit(*s, [&](Transaction& tx) { r = tx.alloc(p); });
  s->set_root("c", r);
  for (int i = 1; i <= 200; ++i)
    th::commit(*s, [&](Transaction& tx) { tx.write(*s->get_root("c"), 0, Value::of_long(i)); });
  CHECK(s->collector().runs() >= 2);
  CHECK(s->read_field(*s->get_root("c"), 0).as_long() == 200);
  CHECK(s->txm().log_tail() < 40 * 64 * 3 / 4 + 80);
}
