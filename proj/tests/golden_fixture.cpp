// Writes fixtures/golden_v1.heap, the reference image other bindings load.
// Directory: $UNIHEAP_FIXTURE_DIR, else <build>/fixtures.
//
// Contents: plasses Config{port: long, chain: reference} and
// Link{value: long, next: reference}; root "config" -> Config{8080, L1},
// L1{1, L2}, L2{2, null}. Capacity 1 MiB, name "golden".

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "ctl/verify.hpp"
#include "support/harness.hpp"
#include "support/oracle.hpp"

using namespace uniheap;

namespace {

std::filesystem::path fixture_dir() {
  if (const char* env = std::getenv("UNIHEAP_FIXTURE_DIR"); env && *env) return env;
  return UNIHEAP_DEFAULT_FIXTURE_DIR;
}

void write_golden(const std::filesystem::path& path) {
  auto s = Session::create(path, 1 << 20, "golden", {}, true, th::quiet());
  const PlassId config = s->init_plass("Config", std::vector<FieldDesc>{{"port", UniType::kLong}, {"chain", UniType::kReference}});
  const PlassId link = s->init_plass("Link", std::vector<FieldDesc>{{"value", UniType::kLong}, {"next", UniType::kReference}});
  th::commit(*s, [&](Transaction& tx) {
    const ObjectRef c = tx.alloc(config);
    const ObjectRef l1 = tx.alloc(link);
    const ObjectRef l2 = tx.alloc(link);
    tx.write(c, 0, Value::of_long(8080));
    tx.write(c, 1, Value::of_ref(l1));
    tx.write(l1, 0, Value::of_long(1));
    tx.write(l1, 1, Value::of_ref(l2));
    tx.write(l2, 0, Value::of_long(2));
    tx.set_root("config", c);
  });
  s->close();
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("the golden image is deterministic") {
  th::TempDir dir;
  write_golden(dir.file("a.heap"));
  write_golden(dir.file("b.heap"));
  const auto a = slurp(dir.file("a.heap"));
  CHECK(a.size() == (1u << 20));
  CHECK(a == slurp(dir.file("b.heap")));
}

TEST_CASE("write and check the golden fixture") {
  const auto dir = fixture_dir();
  std::filesystem::create_directories(dir);
  const auto path = dir / "golden_v1.heap";
  write_golden(path);
  CHECK_FALSE(std::filesystem::exists(LockFile::path_for(path)));
  MESSAGE("golden fixture: " << path.string());

  const auto image = slurp(path);
  const auto h = oracle::read_header(image);
  CHECK(h.magic == 0x0050414548494e55ULL);
  CHECK(std::string(reinterpret_cast<const char*>(image.data()), 7) == "UNIHEAP");
  CHECK(h.version == 1);
  CHECK(h.heap_size == (1u << 20));
  CHECK(h.epoch == 0);
  CHECK(h.gc_phase == 0);
  CHECK(h.next_header_index == 3);
  CHECK(std::string(reinterpret_cast<const char*>(image.data() + 16)) == "golden");
  const auto roots = oracle::read_roots(image);
  REQUIRE(roots.size() == 1);
  CHECK(roots.front().name == "config");
  // One tx: 3 allocs, 5 updates, 1 commit.
  const auto entries = oracle::valid_prefix(oracle::scan_log(image));
  CHECK(entries.size() == 9);
  CHECK(oracle::committed_txs(entries).size() == 1);
  CHECK(verify_image(image).clean());

  HeapOptions ro = th::quiet();
  ro.read_only = true;
  auto s = Session::open(path, ro);
  const auto c = s->get_root("config");
  REQUIRE(c.has_value());
  CHECK(s->plass(s->heap().read_object_header(*c).plass_id)->name == "Config");
  CHECK(s->read_field(*c, 0).as_long() == 8080);
  const auto l1 = s->read_field(*c, 1).as_ref();
  const auto l2 = s->read_field(l1, 1).as_ref();
  CHECK(s->read_field(l1, 0).as_long() == 1);
  CHECK(s->read_field(l2, 0).as_long() == 2);
  CHECK(s->read_field(l2, 1).as_ref().is_null());
}
