// heapctl: create, inspect, verify, collect and benchmark UniHeap heaps.
//
// Exit status: 0 success (or a clean verify), 1 verify found violations,
// 2 usage, I/O or library error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bench.hpp"
#include "uniheap/uniheap.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolations = 1;
constexpr int kExitError = 2;

using json = nlohmann::json;
using SessionPtr = std::unique_ptr<uh_session, uh_status (*)(uh_session*)>;

int fail(uh_status st, const std::string& message, bool as_json) {
  if (as_json) {
    std::cout << json{{"ok", false}, {"status", uh_status_name(st)}, {"message", message}}.dump(2) << "\n";
  } else {
    std::cerr << "heapctl: " << message << "\n";
  }
  return kExitError;
}

int fail_last(uh_status st, bool as_json) { return fail(st, uh_last_error_message(), as_json); }

json take_json(char* text) {
  json j = json::parse(text);
  uh_free_string(text);
  return j;
}

int cmd_create(const std::string& path, std::uint64_t size, const std::string& name, bool force, bool as_json) {
  uh_session* s = nullptr;
  if (auto st = uh_create(path.c_str(), size, name.c_str(), force ? 1 : 0, nullptr, &s); st != UH_OK)
    return fail_last(st, as_json);
  SessionPtr session(s, uh_close);
  uh_stats stats{};
  uh_heap_stats(s, &stats);
  if (auto st = uh_close(session.release()); st != UH_OK) return fail_last(st, as_json);
  if (as_json) {
    std::cout << json{{"ok", true}, {"path", path}, {"heap_size", size}, {"name", name},
                      {"fence_count", stats.fence_count}}.dump(2)
              << "\n";
  } else {
    std::cout << "created " << path << " (" << size << " bytes, name \"" << name << "\")\n";
  }
  return kExitOk;
}

void print_info(const json& j) {
  std::cout << "name:              " << j["name"].get<std::string>() << "\n"
            << "heap size:         " << j["heap_size"] << "\n"
            << "format version:    " << j["version"] << "\n"
            << "active epoch:      " << j["active_epoch"] << "\n"
            << "gc phase:          " << j["gc_phase"].get<std::string>() << "\n"
            << "next header index: " << j["next_header_index"] << "\n"
            << "chunk capacity:    " << j["chunk_capacity"] << "\n";
  std::cout << "regions:\n";
  for (const auto& r : j["regions"])
    std::cout << "  " << r["name"].get<std::string>() << " offset=" << r["offset"] << " length=" << r["length"]
              << "\n";
  const auto& st = j["stats"];
  std::cout << "objects:           " << st["object_count"] << " (" << st["live_count"] << " live)\n"
            << "plasses:           " << st["plass_count"] << "\n"
            << "log bytes used:    " << st["log_bytes_used"] << "\n";
  std::cout << "roots (" << j["roots"].size() << "):\n";
  for (const auto& r : j["roots"])
    std::cout << "  " << r["name"].get<std::string>() << " -> " << r["object"] << "\n";
  std::cout << "plasses (" << j["plasses"].size() << "):\n";
  for (const auto& p : j["plasses"]) {
    std::cout << "  " << p["id"] << " " << p["name"].get<std::string>() << " {";
    bool first = true;
    for (const auto& f : p["fields"]) {
      std::cout << (first ? "" : ", ") << f["name"].get<std::string>() << ": " << f["type"].get<std::string>();
      first = false;
    }
    std::cout << "}\n";
  }
}

int cmd_info(const std::string& path, bool as_json) {
  uh_open_options o;
  uh_default_options(&o);
  o.read_only = 1;
  o.auto_gc = 0;
  uh_session* s = nullptr;
  if (auto st = uh_open(path.c_str(), &o, &s); st != UH_OK) return fail_last(st, as_json);
  SessionPtr session(s, uh_close);
  char* text = nullptr;
  if (auto st = uh_info_json(s, &text); st != UH_OK) return fail_last(st, as_json);
  const json j = take_json(text);
  if (as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    print_info(j);
  }
  return kExitOk;
}

int cmd_verify(const std::string& path, bool as_json) {
  if (std::filesystem::exists(path + ".lock"))
    std::cerr << "heapctl: warning: " << path << " is locked by a writer; the image may be mid-update\n";
  char* text = nullptr;
  int clean = 0;
  const uh_status st = uh_verify_file_json(path.c_str(), &text, &clean);
  if (st != UH_OK && st != UH_NOT_A_HEAP) return fail_last(st, as_json);
  const json j = take_json(text);
  if (as_json) {
    std::cout << j.dump(2) << "\n";
  } else if (st == UH_NOT_A_HEAP) {
    std::cerr << "heapctl: " << path << " is not a heap\n";
  } else {
    for (const auto& v : j["violations"])
      std::cout << v["code"].get<std::string>() << " at " << v["location"].get<std::string>() << ": "
                << v["detail"].get<std::string>() << "\n";
    std::uint64_t checks = 0;
    for (const auto& [k, n] : j["checked"].items()) checks += n.get<std::uint64_t>();
    std::cout << (clean ? "clean" : "violations found") << " (" << j["violations"].size() << " violations, "
              << checks << " items checked)\n";
  }
  if (st == UH_NOT_A_HEAP) return kExitError;
  return clean ? kExitOk : kExitViolations;
}

int cmd_gc(const std::string& path, bool force_lock, bool as_json) {
  uh_open_options o;
  uh_default_options(&o);
  o.auto_gc = 0;
  o.force_lock = force_lock ? 1 : 0;
  uh_session* s = nullptr;
  if (auto st = uh_open(path.c_str(), &o, &s); st != UH_OK) return fail_last(st, as_json);
  SessionPtr session(s, uh_close);
  uint64_t before = 0, after = 0;
  uh_fence_count(s, &before);
  uh_gc_report r{};
  if (auto st = uh_request_gc(s, &r); st != UH_OK) return fail_last(st, as_json);
  uh_fence_count(s, &after);
  if (auto st = uh_close(session.release()); st != UH_OK) return fail_last(st, as_json);
  if (as_json) {
    std::cout << json{{"live", r.live},
                      {"reclaimed", r.reclaimed},
                      {"log_bytes_before", r.log_bytes_before},
                      {"log_bytes_after", r.log_bytes_after},
                      {"active_epoch", r.active_epoch},
                      {"fences", after - before}}
                     .dump(2)
              << "\n";
  } else {
    std::cout << "live " << r.live << ", reclaimed " << r.reclaimed << ", log " << r.log_bytes_before << " -> "
              << r.log_bytes_after << " bytes, epoch " << r.active_epoch << "\n";
  }
  return kExitOk;
}

int cmd_bench(const heapctl::BenchOptions& opt, bool as_json) {
  json j;
  try {
    j = heapctl::run_bench(opt);
  } catch (const heapctl::BenchError& e) {
    return fail(static_cast<uh_status>(e.status), e.message, as_json);
  }
  if (as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& [k, v] : j.items()) std::cout << k << ": " << v.dump() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Create, inspect, verify, collect and benchmark UniHeap heaps"};
  app.require_subcommand(1);

  std::string path;
  bool as_json = false;

  auto* create = app.add_subcommand("create", "Format a new heap file");
  std::uint64_t size = 0;
  std::string name;
  bool force = false;
  create->add_option("--path", path, "Heap file")->required();
  create->add_option("--size", size, "Capacity in bytes")->required();
  create->add_option("--name", name, "Heap name (at most 31 bytes)")->required();
  create->add_flag("--force", force, "Overwrite an existing heap");
  create->add_flag("--json", as_json, "JSON output");

  auto* info = app.add_subcommand("info", "Print header, regions, stats, roots and plasses");
  info->add_option("--path", path, "Heap file")->required();
  info->add_flag("--json", as_json, "JSON output");

  auto* verify = app.add_subcommand("verify", "Check the stored image for structural violations");
  verify->add_option("--path", path, "Heap file")->required();
  verify->add_flag("--json", as_json, "JSON output");

  auto* gc = app.add_subcommand("gc", "Run one garbage collection");
  bool force_lock = false;
  gc->add_option("--path", path, "Heap file")->required();
  gc->add_flag("--force-lock", force_lock, "Take over a stale lock");
  gc->add_flag("--json", as_json, "JSON output");

  auto* bench = app.add_subcommand("bench", "Run a YCSB-style workload and report fence counts");
  heapctl::BenchOptions bo;
  std::string workload = "a";
  bench->add_option("--path", bo.path, "Heap file")->required();
  bench->add_option("--workload", workload, "a, b, c, d or f")
      ->check(CLI::IsMember({"a", "b", "c", "d", "f"}));
  bench->add_option("--ops", bo.ops, "Operations to run");
  bench->add_option("--threads", bo.threads, "Mutator threads")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bo.seed, "RNG seed");
  bench->add_option("--records", bo.records, "Records loaded before the run");
  bench->add_option("--tx-writes", bo.tx_writes, "Records written per update transaction")
      ->check(CLI::PositiveNumber);
  bench->add_flag("--baseline", bo.baseline, "Fence every log record separately");
  bench->add_flag("--force-lock", bo.force_lock, "Take over a stale lock");
  bench->add_flag("--json", as_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }

  if (*create) return cmd_create(path, size, name, force, as_json);
  if (*info) return cmd_info(path, as_json);
  if (*verify) return cmd_verify(path, as_json);
  if (*gc) return cmd_gc(path, force_lock, as_json);
  bo.workload = workload.front();
  return cmd_bench(bo, as_json);
}
