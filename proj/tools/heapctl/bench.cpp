#include "bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "uniheap/uniheap.h"

namespace heapctl {
namespace {

constexpr const char* kRootName = "bench";
constexpr std::uint64_t kLoadBatch = 64;

void check(uh_status st) {
  if (st != UH_OK) throw BenchError{st, uh_last_error_message()};
}

// YCSB-style Zipfian ranks over [0, n), theta 0.99, rank 0 hottest.
class Zipf {
 public:
  static constexpr double kTheta = 0.99;

  std::uint64_t next(std::mt19937_64& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    grow(n);
    const double alpha = 1.0 / (1.0 - kTheta);
    const double eta = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - kTheta)) / (1.0 - zeta2_ / zetan_);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double uz = u * zetan_;
    if (uz < 1.0) return 0;
    if (uz < 1.0 + std::pow(0.5, kTheta)) return 1;
    const auto r = static_cast<std::uint64_t>(static_cast<double>(n) * std::pow(eta * u - eta + 1.0, alpha));
    return std::min(r, n - 1);
  }

 private:
  void grow(std::uint64_t n) {
    while (counted_ < n) {
      ++counted_;
      zetan_ += 1.0 / std::pow(static_cast<double>(counted_), kTheta);
    }
  }

  std::uint64_t counted_ = 0;
  double zetan_ = 0.0;
  double zeta2_ = 1.0 + 1.0 / std::pow(2.0, kTheta);
};

struct Schema {
  std::uint32_t kv = 0, meta = 0, refs = 0;
  std::uint32_t f_key = 0, f_value = 0, f_count = 0, f_index = 0;
};

struct Counters {
  std::atomic<std::uint64_t> reads{0}, updates{0}, inserts{0}, writes{0};
  std::atomic<std::uint64_t> write_txs{0}, read_txs{0}, conflicts{0}, gc_runs{0};
};

// Field access through an open transaction, or directly when `tx` is null.
struct Access {
  uh_session* s;
  uh_tx* tx;

  uh_value read(uh_ref ref, std::uint32_t field) const {
    uh_value v{};
    check(tx ? uh_tx_read_field(tx, ref, field, &v) : uh_read_field(s, ref, field, &v));
    return v;
  }
  void write(uh_ref ref, std::uint32_t field, uh_value v) const { check(uh_write_field(tx, ref, field, v)); }
};

class Bench {
 public:
  Bench(const BenchOptions& opt, uh_session* s, bool writable) : opt_(opt), s_(s), writable_(writable) {}

  void resolve_schema() {
    const uh_field_desc kv[] = {{"key", UH_LONG}, {"value", UH_LONG}};
    const uh_field_desc meta[] = {{"count", UH_LONG}, {"index", UH_REFERENCE}};
    if (writable_) {
      check(uh_init_plass(s_, "KV", kv, 2, &sc_.kv));
      check(uh_init_plass(s_, "BenchMeta", meta, 2, &sc_.meta));
      check(uh_array_plass(s_, UH_REFERENCE, &sc_.refs));
    } else {
      check(uh_exists_plass(s_, "KV", &sc_.kv));
      check(uh_exists_plass(s_, "BenchMeta", &sc_.meta));
    }
    check(uh_field_index(s_, sc_.kv, "key", &sc_.f_key));
    check(uh_field_index(s_, sc_.kv, "value", &sc_.f_value));
    check(uh_field_index(s_, sc_.meta, "count", &sc_.f_count));
    check(uh_field_index(s_, sc_.meta, "index", &sc_.f_index));
  }

  // Creates the root and index if absent, then tops the store up to
  // `records` entries.
  void load() {
    uh_ref meta = 0;
    if (uh_get_root(s_, kRootName, &meta) != UH_OK) {
      std::uint64_t capacity = std::max<std::uint64_t>(opt_.records, 1);
      if (opt_.workload == 'd') capacity += opt_.ops;
      in_tx([&](const Access& a) {
        uh_ref m = 0, idx = 0;
        check(uh_alloc_obj(a.tx, sc_.meta, &m));
        check(uh_alloc_array(a.tx, sc_.refs, capacity, &idx));
        a.write(m, sc_.f_index, uh_reference(idx));
        check(uh_tx_set_root(a.tx, kRootName, m));
      });
    }
    std::mt19937_64 rng(opt_.seed ^ 0x9e3779b97f4a7c15ULL);
    for (;;) {
      bool done = false;
      in_tx([&](const Access& a) {
        uh_ref m = root();
        const auto count = static_cast<std::uint64_t>(uh_as_long(a.read(m, sc_.f_count)));
        if (count >= opt_.records) {
          done = true;
          return;
        }
        const auto end = std::min(opt_.records, count + kLoadBatch);
        uh_ref idx = ensure_capacity(a, m, end);
        for (auto k = count; k < end; ++k) {
          uh_ref rec = 0;
          check(uh_alloc_obj(a.tx, sc_.kv, &rec));
          a.write(rec, sc_.f_key, uh_long(static_cast<std::int64_t>(k)));
          a.write(rec, sc_.f_value, uh_long(static_cast<std::int64_t>(rng())));
          a.write(idx, static_cast<std::uint32_t>(k), uh_reference(rec));
        }
        a.write(m, sc_.f_count, uh_long(static_cast<std::int64_t>(end)));
      });
      if (done) break;
    }
  }

  void run(unsigned threads) {
    std::vector<std::thread> pool;
    std::vector<BenchError> errors;
    std::mutex err_mu;
    for (unsigned t = 0; t < threads; ++t) {
      const std::uint64_t share = opt_.ops / threads + (t < opt_.ops % threads ? 1 : 0);
      pool.emplace_back([this, t, share, &errors, &err_mu] {
        try {
          worker(t, share);
        } catch (const BenchError& e) {
          std::lock_guard lock(err_mu);
          errors.push_back(e);
        }
      });
    }
    for (auto& th : pool) th.join();
    if (!errors.empty()) throw errors.front();
  }

  const Counters& counters() const { return c_; }

 private:
  uh_ref root() const {
    uh_ref m = 0;
    check(uh_get_root(s_, kRootName, &m));
    return m;
  }

  // Returns an index array with room for `needed` slots, doubling it
  // within the caller's transaction when full.
  uh_ref ensure_capacity(const Access& a, uh_ref meta, std::uint64_t needed) {
    uh_ref idx = a.read(meta, sc_.f_index).bits;
    std::uint32_t len = 0;
    check(uh_slot_count(s_, idx, &len));
    if (needed <= len) return idx;
    const auto count = static_cast<std::uint64_t>(uh_as_long(a.read(meta, sc_.f_count)));
    uh_ref bigger = 0;
    check(uh_alloc_array(a.tx, sc_.refs, std::max<std::uint64_t>(needed, 2ULL * len), &bigger));
    for (std::uint64_t k = 0; k < count; ++k)
      a.write(bigger, static_cast<std::uint32_t>(k), a.read(idx, static_cast<std::uint32_t>(k)));
    a.write(meta, sc_.f_index, uh_reference(bigger));
    return bigger;
  }

  // Runs `body` in a transaction until it commits. Log exhaustion triggers
  // a collection and a retry.
  template <typename Body>
  bool in_tx(Body&& body) {
    for (;;) {
      uh_tx* tx = nullptr;
      check(uh_atomic_begin(s_, &tx));
      std::unique_ptr<uh_tx, void (*)(uh_tx*)> guard(tx, uh_tx_free);
      body(Access{s_, tx});
      const uh_status st = uh_atomic_end(tx);
      guard.reset();
      if (st == UH_OK) return true;
      if (st == UH_CONFLICT_RETRY) {
        c_.conflicts.fetch_add(1);
        continue;
      }
      if (st == UH_LOG_FULL) {
        const uh_status g = uh_request_gc(s_, nullptr);
        if (g == UH_OK) c_.gc_runs.fetch_add(1);
        else if (g != UH_GC_ALREADY_RUNNING) check(g);
        continue;
      }
      check(st);
    }
  }

  std::uint64_t pick(std::mt19937_64& rng, Zipf& zipf, std::uint64_t count) const {
    const auto rank = zipf.next(rng, count);
    // Workload D reads the most recent inserts hottest.
    return opt_.workload == 'd' ? count - 1 - rank : rank;
  }

  void do_read(std::mt19937_64& rng, Zipf& zipf) {
    auto body = [&](const Access& a) {
      uh_ref m = root();
      const auto count = static_cast<std::uint64_t>(uh_as_long(a.read(m, sc_.f_count)));
      if (count == 0) return;
      uh_ref idx = a.read(m, sc_.f_index).bits;
      uh_ref rec = a.read(idx, static_cast<std::uint32_t>(pick(rng, zipf, count))).bits;
      (void)a.read(rec, sc_.f_value);
    };
    if (writable_) {
      in_tx(body);
    } else {
      body(Access{s_, nullptr});
    }
    c_.reads.fetch_add(1);
    c_.read_txs.fetch_add(writable_ ? 1 : 0);
  }

  // Update (or read-modify-write) of `tx_writes` distinct records.
  void do_update(std::mt19937_64& rng, Zipf& zipf, bool rmw) {
    std::uint64_t writes = 0;
    in_tx([&](const Access& a) {
      writes = 0;
      uh_ref m = root();
      const auto count = static_cast<std::uint64_t>(uh_as_long(a.read(m, sc_.f_count)));
      if (count == 0) return;
      uh_ref idx = a.read(m, sc_.f_index).bits;
      const auto want = std::min<std::uint64_t>(opt_.tx_writes, count);
      std::vector<std::uint64_t> keys;
      while (keys.size() < want) {
        auto k = pick(rng, zipf, count);
        while (std::find(keys.begin(), keys.end(), k) != keys.end()) k = (k + 1) % count;
        keys.push_back(k);
      }
      for (auto k : keys) {
        uh_ref rec = a.read(idx, static_cast<std::uint32_t>(k)).bits;
        std::int64_t v = static_cast<std::int64_t>(rng());
        if (rmw) v = uh_as_long(a.read(rec, sc_.f_value)) + 1;
        a.write(rec, sc_.f_value, uh_long(v));
        ++writes;
      }
    });
    c_.updates.fetch_add(1);
    c_.writes.fetch_add(writes);
    if (writes > 0) c_.write_txs.fetch_add(1);
    if (rmw) c_.reads.fetch_add(1);
  }

  void do_insert(std::mt19937_64& rng) {
    std::uint64_t writes = 0;
    in_tx([&](const Access& a) {
      writes = 0;
      uh_ref m = root();
      const auto count = static_cast<std::uint64_t>(uh_as_long(a.read(m, sc_.f_count)));
      uh_ref idx = ensure_capacity(a, m, count + 1);
      uh_ref rec = 0;
      check(uh_alloc_obj(a.tx, sc_.kv, &rec));
      a.write(rec, sc_.f_key, uh_long(static_cast<std::int64_t>(count)));
      a.write(rec, sc_.f_value, uh_long(static_cast<std::int64_t>(rng())));
      a.write(idx, static_cast<std::uint32_t>(count), uh_reference(rec));
      a.write(m, sc_.f_count, uh_long(static_cast<std::int64_t>(count + 1)));
      writes = 4;
    });
    c_.inserts.fetch_add(1);
    c_.writes.fetch_add(writes);
    c_.write_txs.fetch_add(1);
  }

  void worker(unsigned t, std::uint64_t ops) {
    std::seed_seq seq{opt_.seed, static_cast<std::uint64_t>(t)};
    std::mt19937_64 rng(seq);
    Zipf zipf;
    std::uniform_int_distribution<int> pct(0, 99);
    for (std::uint64_t i = 0; i < ops; ++i) {
      const int p = pct(rng);
      switch (opt_.workload) {
        case 'a': p < 50 ? do_read(rng, zipf) : do_update(rng, zipf, false); break;
        case 'b': p < 95 ? do_read(rng, zipf) : do_update(rng, zipf, false); break;
        case 'c': do_read(rng, zipf); break;
        case 'd': p < 95 ? do_read(rng, zipf) : do_insert(rng); break;
        case 'f': p < 50 ? do_read(rng, zipf) : do_update(rng, zipf, true); break;
        default: throw BenchError{UH_INVALID_ARGUMENT, "unknown workload"};
      }
    }
  }

  const BenchOptions& opt_;
  uh_session* s_;
  bool writable_;
  Schema sc_;
  Counters c_;
};

using SessionPtr = std::unique_ptr<uh_session, uh_status (*)(uh_session*)>;

SessionPtr open_session(const BenchOptions& opt, bool read_only) {
  uh_open_options o;
  uh_default_options(&o);
  o.read_only = read_only ? 1 : 0;
  o.auto_gc = 0;
  o.force_lock = opt.force_lock ? 1 : 0;
  o.per_write_fencing = opt.baseline ? 1 : 0;
  uh_session* s = nullptr;
  check(uh_open(opt.path.c_str(), &o, &s));
  return SessionPtr(s, uh_close);
}

}  // namespace

nlohmann::json run_bench(const BenchOptions& opt) {
  if (std::string("abcdf").find(opt.workload) == std::string::npos)
    throw BenchError{UH_INVALID_ARGUMENT, std::string("unknown workload '") + opt.workload + "'"};
  if (opt.threads == 0) throw BenchError{UH_INVALID_ARGUMENT, "--threads must be at least 1"};
  if (opt.tx_writes == 0) throw BenchError{UH_INVALID_ARGUMENT, "--tx-writes must be at least 1"};

  // Workload C needs no write access once the store is loaded.
  bool writable = true;
  SessionPtr session(nullptr, uh_close);
  if (opt.workload == 'c') {
    session = open_session(opt, true);
    uh_ref meta = 0;
    uint32_t kv = 0;
    bool loaded = uh_get_root(session.get(), kRootName, &meta) == UH_OK &&
                  uh_exists_plass(session.get(), "KV", &kv) == UH_OK;
    if (loaded) {
      uh_value count{};
      uint32_t f_count = 0, meta_plass = 0;
      loaded = uh_exists_plass(session.get(), "BenchMeta", &meta_plass) == UH_OK &&
               uh_field_index(session.get(), meta_plass, "count", &f_count) == UH_OK &&
               uh_read_field(session.get(), meta, f_count, &count) == UH_OK &&
               static_cast<std::uint64_t>(uh_as_long(count)) >= opt.records;
    }
    if (loaded) {
      writable = false;
    } else {
      session.reset();
    }
  }
  if (writable) session = open_session(opt, false);

  uint64_t f_open = 0;
  check(uh_fence_count(session.get(), &f_open));

  Bench bench(opt, session.get(), writable);
  bench.resolve_schema();
  if (writable) bench.load();

  uint64_t f_start = 0;
  check(uh_fence_count(session.get(), &f_start));
  const auto t0 = std::chrono::steady_clock::now();
  bench.run(opt.threads);
  const auto t1 = std::chrono::steady_clock::now();
  uint64_t f_end = 0;
  check(uh_fence_count(session.get(), &f_end));

  const auto& c = bench.counters();
  const std::uint64_t fence_total = f_end - f_start;
  const std::uint64_t write_txs = c.write_txs.load();
  nlohmann::json j;
  j["workload"] = std::string(1, opt.workload);
  j["ops"] = opt.ops;
  j["threads"] = opt.threads;
  j["seed"] = opt.seed;
  j["records"] = opt.records;
  j["tx_writes"] = opt.tx_writes;
  j["baseline"] = opt.baseline;
  j["read_only_session"] = !writable;
  j["reads"] = c.reads.load();
  j["updates"] = c.updates.load();
  j["inserts"] = c.inserts.load();
  j["writes"] = c.writes.load();
  j["committed_txs"] = write_txs;
  j["read_txs"] = c.read_txs.load();
  j["conflicts"] = c.conflicts.load();
  j["gc_runs"] = c.gc_runs.load();
  j["fence_total"] = fence_total;
  j["fences_per_tx"] = write_txs ? static_cast<double>(fence_total) / static_cast<double>(write_txs) : 0.0;
  j["setup_fences"] = f_start - f_open;
  j["elapsed_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();

  const uh_status st = uh_close(session.release());
  if (st != UH_OK) throw BenchError{st, uh_last_error_message()};
  return j;
}

}  // namespace heapctl
