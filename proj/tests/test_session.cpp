#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <fstream>

#include "ctl/verify.hpp"
#include "support/harness.hpp"

using namespace uniheap;
using th::code_of;

namespace {

// A pid that certainly belongs to no running process: a reaped child's.
long dead_pid() {
  const pid_t child = ::fork();
  if (child == 0) ::_exit(0);
  int status = 0;
  ::waitpid(child, &status, 0);
  return child;
}

void write_lock(const std::filesystem::path& heap, long pid) {
  std::ofstream(LockFile::path_for(heap)) << pid << "\n";
}

HeapOptions read_only() {
  HeapOptions o = th::quiet();
  o.read_only = true;
  return o;
}

}  // namespace

TEST_CASE("a writer holds the lock file until close") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  auto s = Session::create(path, 1 << 20, "locked", {}, false, th::quiet());
  const auto lock = LockFile::path_for(path);
  REQUIRE(std::filesystem::exists(lock));
  long pid = 0;
  std::ifstream(lock) >> pid;
  CHECK(pid == ::getpid());
  CHECK(code_of([&] { Session::open(path, th::quiet()); }) == ErrorCode::kLockHeld);
  HeapOptions force = th::quiet();
  force.force_lock = true;
  CHECK(code_of([&] { Session::open(path, force); }) == ErrorCode::kLockHeld);
  s->close();
  CHECK_FALSE(std::filesystem::exists(lock));
  auto again = Session::open(path, th::quiet());
  CHECK(again->heap().name() == "locked");
}

TEST_CASE("a stale lock is taken over only with force") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  Session::create(path, 1 << 20, "stale", {}, false, th::quiet())->close();
  write_lock(path, dead_pid());
  CHECK(code_of([&] { Session::open(path, th::quiet()); }) == ErrorCode::kLockHeld);
  HeapOptions force = th::quiet();
  force.force_lock = true;
  auto s = Session::open(path, force);
  long pid = 0;
  std::ifstream(LockFile::path_for(path)) >> pid;
  CHECK(pid == ::getpid());
}

TEST_CASE("a killed writer's heap recovers once its lock is reclaimed") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  ObjectRef r;
  {
    auto s = Session::create(path, 1 << 20, "killed", {}, false, th::quiet());
    const PlassId p = s->init_plass("Point", th::longs({"x"}));
    th::commit(*s, [&](Transaction& tx) {
      r = tx.alloc(p);
      tx.write(r, 0, Value::of_long(31));
    });
    s->set_root("p", r);
    {
      // In flight when the process dies.
      auto tx = s->atomic_begin();
      tx->write(r, 0, Value::of_long(32));
      s->abandon();
    }
  }
  // The dead owner's pid is not ours; simulate it.
  write_lock(path, dead_pid());
  HeapOptions force = th::quiet();
  force.force_lock = true;
  auto s = Session::open(path, force);
  CHECK(s->read_field(*s->get_root("p"), 0).as_long() == 31);
  s->close();
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> image((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(verify_image(image).clean());
}

TEST_CASE("a reader alongside a writer sees the last fenced state") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  auto w = Session::create(path, 1 << 20, "shared", {}, false, th::quiet());
  const PlassId p = w->init_plass("Point", th::longs({"x"}));
  ObjectRef r;
  th::commit(*w, [&](Transaction& tx) {
    r = tx.alloc(p);
    tx.write(r, 0, Value::of_long(1));
  });
  w->set_root("p", r);
  auto tx = w->atomic_begin();
  tx->write(r, 0, Value::of_long(2));
  {
    auto reader = Session::open(path, read_only());
    CHECK(reader->read_only());
    CHECK(reader->read_field(*reader->get_root("p"), 0).as_long() == 1);
    CHECK(reader->fence_count() == 0);
  }
  REQUIRE(tx->commit() == CommitResult::kCommitted);
  {
    auto reader = Session::open(path, read_only());
    CHECK(reader->read_field(*reader->get_root("p"), 0).as_long() == 2);
  }
  // Stores that were never fenced stay invisible.
  w->device().write_u64(w->heap().chunk_offset(r) + 8, 0xdead);
  {
    auto reader = Session::open(path, read_only());
    CHECK(reader->heap().read_object_header(r).flags == 0);
  }
  CHECK(std::filesystem::exists(LockFile::path_for(path)));
}

TEST_CASE("read-only sessions refuse every fence-bearing operation") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  ObjectRef r;
  {
    auto w = Session::create(path, 1 << 20, "ro", {}, false, th::quiet());
    const PlassId p = w->init_plass("Point", th::longs({"x"}));
    th::commit(*w, [&](Transaction& tx) { r = tx.alloc(p); });
    w->set_root("p", r);
  }
  auto s = Session::open(path, read_only());
  CHECK(code_of([&] { s->write_field_atomic(r, 0, Value::of_long(1)); }) == ErrorCode::kReadOnly);
  CHECK(code_of([&] { s->set_root("q", r); }) == ErrorCode::kReadOnly);
  CHECK(code_of([&] { s->request_gc(); }) == ErrorCode::kReadOnly);
  CHECK(code_of([&] { s->init_plass("Other", th::longs({"y"})); }) == ErrorCode::kReadOnly);
  CHECK(s->init_plass("Point", th::longs({"x"})) == 1);
  {
    auto tx = s->atomic_begin();
    CHECK(tx->read(r, 0).as_long() == 0);
    CHECK(code_of([&] { tx->write(r, 0, Value::of_long(1)); }) == ErrorCode::kReadOnly);
    CHECK(code_of([&] { tx->alloc(1); }) == ErrorCode::kReadOnly);
  }
  CHECK(s->fence_count() == 0);
  CHECK(code_of([&] { Session::create(dir.file("x.heap"), 1 << 20, "x", {}, false, read_only()); }) ==
        ErrorCode::kReadOnly);
}

TEST_CASE("close then reopen preserves heap statistics") {
  th::TempDir dir;
  const auto path = dir.file("h.heap");
  HeapStats before;
  {
    auto s = Session::create(path, 2 << 20, "stats", {}, false, th::quiet());
    const PlassId p = s->init_plass("Point", th::longs({"x", "y"}));
    std::vector<ObjectRef> objs;
    th::commit(*s, [&](Transaction& tx) {
      for (int i = 0; i < 10; ++i) objs.push_back(tx.alloc(p));
    });
    for (int i = 0; i < 10; ++i) s->write_field_atomic(objs[i], 1, Value::of_long(i));
    s->set_root("a", objs[2]);
    s->request_gc();
    th::commit(*s, [&](Transaction& tx) { tx.alloc(p); });
    before = s->heap_stats();
  }
  auto s = Session::open(path, th::quiet());
  const auto after = s->heap_stats();
  CHECK(after.object_count == before.object_count);
  CHECK(after.live_count == before.live_count);
  CHECK(after.plass_count == before.plass_count);
  CHECK(after.log_bytes_used == before.log_bytes_used);
  CHECK(after.active_epoch == before.active_epoch);
  CHECK(after.fence_count == 0);
}

TEST_CASE("open and create argument errors") {
  th::TempDir dir;
  CHECK(code_of([&] { Session::open(dir.file("missing.heap")); }) == ErrorCode::kNotAHeap);
  {
    std::ofstream(dir.file("odd.bin")) << "not a heap at all";
  }
  CHECK(code_of([&] { Session::open(dir.file("odd.bin"), read_only()); }) == ErrorCode::kNotAHeap);
  CHECK(code_of([&] { Session::open(dir.file("odd.bin")); }) == ErrorCode::kNotAHeap);
  CHECK_FALSE(std::filesystem::exists(LockFile::path_for(dir.file("odd.bin"))));
  {
    std::ofstream zeros(dir.file("zeros.bin"), std::ios::binary);
    const std::vector<char> block(1 << 16, 0);
    zeros.write(block.data(), static_cast<std::streamsize>(block.size()));
  }
  CHECK(code_of([&] { Session::open(dir.file("zeros.bin"), read_only()); }) == ErrorCode::kNotAHeap);

  const auto path = dir.file("h.heap");
  Session::create(path, 1 << 20, "first", {}, false, th::quiet())->close();
  CHECK(code_of([&] { Session::create(path, 1 << 20, "second", {}, false, th::quiet()); }) ==
        ErrorCode::kAlreadyFormatted);
  CHECK(code_of([&] { Session::create(path, 1 << 20, "second", {}, true, th::quiet()); }) == ErrorCode::kOk);
  CHECK(Session::open(path, read_only())->heap().name() == "second");
  // Odd-sized junk may be overwritten without force.
  CHECK(code_of([&] { Session::create(dir.file("odd.bin"), 1 << 20, "fresh", {}, false, th::quiet()); }) ==
        ErrorCode::kOk);
  CHECK(code_of([&] { Session::create(dir.file("bad.heap"), 1000, "x", {}, false, th::quiet()); }) ==
        ErrorCode::kInvalidCapacity);
  CHECK_FALSE(std::filesystem::exists(dir.file("bad.heap")));
  CHECK(code_of([&] { Session::create(dir.file("bad.heap"), 1 << 20, std::string(40, 'n'), {}, false, th::quiet()); }) ==
        ErrorCode::kNameTooLong);
}

TEST_CASE("the whole public surface works through one session") {
  th::TempDir dir;
  auto s = Session::create(dir.file("h.heap"), 2 << 20, "surface");
  const PlassId p = s->init_plass("Pair", std::vector<FieldDesc>{{"n", UniType::kInt}, {"other", UniType::kReference}});
  CHECK(s->exists_plass("Pair") == p);
  auto tx = s->atomic_begin();
  const ObjectRef a = tx->alloc(p);
  const ObjectRef b = tx->alloc(p);
  tx->write(a, 0, Value::of_int(1));
  tx->write(a, 1, Value::of_ref(b));
  tx->write(b, 0, Value::of_int(2));
  tx->set_root("a", a);
  CHECK(tx->commit() == CommitResult::kCommitted);
  tx.reset();
  CHECK(s->get_root("a") == a);
  CHECK(s->list_roots().size() == 1);
  s->write_field_atomic(b, 0, Value::of_int(3));
  CHECK(s->read_field(s->read_field(a, 1).as_ref(), 0).as_int() == 3);
  auto abandoned = s->atomic_begin();
  abandoned->write(b, 0, Value::of_int(4));
  abandoned->abort();
  abandoned.reset();
  const auto rep = s->request_gc();
  CHECK(rep.live == 2);
  const auto stats = s->heap_stats();
  CHECK(stats.live_count == 2);
  CHECK(stats.fence_count == s->fence_count());
  CHECK(s->read_field(s->read_field(*s->get_root("a"), 1).as_ref(), 0).as_int() == 3);
}
