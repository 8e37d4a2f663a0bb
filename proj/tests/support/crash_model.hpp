#pragma once

// Crash-consistency model: a small transactional program is run against a
// heap with a crash armed somewhere inside it. After recovery the heap must
// equal a plain in-memory model that applies exactly the transactions whose
// COMMIT record the independent log reader finds on media.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ctl/verify.hpp"
#include "support/harness.hpp"
#include "support/oracle.hpp"

namespace cm {

using namespace uniheap;

inline constexpr std::uint32_t kFields = 4;
inline constexpr std::size_t kBaseObjects = 8;

struct Op {
  bool alloc = false;
  std::size_t object = 0;  // index into the program's object list
  std::uint32_t field = 0;
  std::int64_t value = 0;
};

struct Program {
  std::vector<std::vector<Op>> txs;
};

/// Up to `max_txs` transactions of 1..`max_writes` writes each; roughly one
/// in five also allocates an object that later writes may target.
inline Program random_program(std::mt19937_64& rng, std::size_t max_txs = 8, std::size_t max_writes = 8) {
  Program p;
  std::size_t objects = kBaseObjects;
  const auto n = 1 + rng() % max_txs;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<Op> ops;
    if (rng() % 5 == 0) {
      ops.push_back({true, objects, 0, 0});
      ++objects;
    }
    const auto w = 1 + rng() % max_writes;
    for (std::size_t i = 0; i < w; ++i)
      ops.push_back({false, rng() % objects, static_cast<std::uint32_t>(rng() % kFields),
                     static_cast<std::int64_t>(rng() % 1000000) - 500000});
    p.txs.push_back(std::move(ops));
  }
  return p;
}

/// Fixed three-transaction program used for exhaustive enumeration.
inline Program three_tx_program() {
  Program p;
  p.txs.push_back({{false, 0, 0, 101}, {false, 1, 1, 102}, {false, 2, 3, 103}});
  p.txs.push_back({{true, 8, 0, 0}, {false, 8, 2, 201}, {false, 0, 0, 202}});
  p.txs.push_back({{false, 8, 2, 301}, {false, 3, 1, 302}, {false, 1, 1, 303}, {false, 7, 3, 304}});
  return p;
}

struct World {
  std::unique_ptr<Session> s;
  PlassId plass = 0;
  std::vector<ObjectRef> objects;  // base objects, then program allocations as they happen
};

/// Durable starting point: 8 objects with field f of object i holding i*10+f.
inline World setup() {
  World w;
  w.s = th::fresh(2ull << 20);
  w.plass = w.s->init_plass("Cell", th::longs({"a", "b", "c", "d"}));
  th::commit(*w.s, [&](Transaction& tx) {
    for (std::size_t i = 0; i < kBaseObjects; ++i) {
      w.objects.push_back(tx.alloc(w.plass));
      for (std::uint32_t f = 0; f < kFields; ++f)
        tx.write(w.objects.back(), f, Value::of_long(static_cast<std::int64_t>(i * 10 + f)));
    }
  });
  return w;
}

struct Outcome {
  std::vector<std::uint64_t> tx_ids;  // one per transaction that began
  bool crashed = false;
};

/// Runs `p` until it finishes or the armed crash fires.
inline Outcome run(World& w, const Program& p) {
  Outcome out;
  try {
    for (const auto& ops : p.txs) {
      auto tx = w.s->atomic_begin();
      out.tx_ids.push_back(tx->id());
      for (const auto& op : ops) {
        if (op.alloc) {
          w.objects.push_back(tx->alloc(w.plass));
        } else {
          tx->write(w.objects[op.object], op.field, Value::of_long(op.value));
        }
      }
      if (tx->commit() != CommitResult::kCommitted) throw std::runtime_error("conflict in a single-threaded program");
    }
  } catch (const CrashInjected&) {
    out.crashed = true;
  }
  return out;
}

inline std::uint64_t program_fences(const Program& p) { return 2 * p.txs.size(); }

struct Verdict {
  bool ok = true;
  std::string why;
  std::size_t committed = 0;
  void fail(std::string msg) {
    if (ok) why = std::move(msg);
    ok = false;
  }
};

/// Crashes the device, reads the durable commit set with the independent
/// log reader, recovers, and compares everything against the model.
inline Verdict crash_and_check(World& w, const Program& p, const Outcome& out) {
  Verdict v;
  auto dev = w.s->device_ptr();
  w.s->abandon();
  w.s.reset();
  dev->crash();

  const auto image = dev->persisted_view();
  const auto durable = oracle::committed_txs(oracle::valid_prefix(oracle::scan_log(image)));
  // Which program transactions committed; they must form a prefix.
  std::vector<bool> applied(out.tx_ids.size(), false);
  bool gap = false;
  for (std::size_t t = 0; t < out.tx_ids.size(); ++t) {
    applied[t] = durable.count(out.tx_ids[t]) != 0;
    if (applied[t] && gap) v.fail("committed transaction after an uncommitted one");
    if (!applied[t]) gap = true;
    if (applied[t]) ++v.committed;
  }
  // Every transaction before the one that crashed finished both fences.
  for (std::size_t t = 0; t + 1 < out.tx_ids.size(); ++t)
    if (!applied[t]) v.fail("fully fenced transaction " + std::to_string(t) + " lost");
  if (!out.crashed && v.committed != p.txs.size()) v.fail("uncrashed run lost a transaction");

  // Model state.
  std::map<std::pair<std::size_t, std::uint32_t>, std::int64_t> model;
  for (std::size_t i = 0; i < kBaseObjects; ++i)
    for (std::uint32_t f = 0; f < kFields; ++f) model[{i, f}] = static_cast<std::int64_t>(i * 10 + f);
  std::set<std::size_t> live;
  for (std::size_t i = 0; i < kBaseObjects; ++i) live.insert(i);
  for (std::size_t t = 0; t < out.tx_ids.size(); ++t) {
    if (!applied[t]) continue;
    for (const auto& op : p.txs[t]) {
      if (op.alloc) {
        live.insert(op.object);
        for (std::uint32_t f = 0; f < kFields; ++f) model[{op.object, f}] = 0;
      } else {
        model[{op.object, op.field}] = op.value;
      }
    }
  }

  std::unique_ptr<Session> again;
  try {
    again = Session::open_on(dev, th::quiet());
  } catch (const std::exception& e) {
    v.fail(std::string("recovery failed: ") + e.what());
    return v;
  }
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    const ObjectRef ref = w.objects[i];
    const bool expect_live = live.count(i) != 0;
    if (again->heap().objects().is_live(ref) != expect_live) {
      v.fail("liveness of object " + std::to_string(i));
      continue;
    }
    if (!expect_live) continue;
    for (std::uint32_t f = 0; f < kFields; ++f) {
      const auto got = again->read_field(ref, f).as_long();
      if (got != model[{i, f}])
        v.fail("object " + std::to_string(i) + " field " + std::to_string(f) + ": got " + std::to_string(got) +
               ", model " + std::to_string(model[{i, f}]));
    }
  }
  if (again->heap().objects().live_count() != live.size()) v.fail("live count");
  for (std::uint64_t id = 1; id <= again->heap().next_header_index(); ++id)
    if (again->txm().lock_word(ObjectRef{id}) & kLockBit) v.fail("lock bit left set");

  const auto report = verify_image(again->device().persisted_view());
  if (!report.clean())
    v.fail("verify: " + (report.violations.empty() ? std::string("not a heap") : report.violations.front().code + " " +
                                                                                     report.violations.front().detail));
  w.s = std::move(again);
  return v;
}

}  // namespace cm
