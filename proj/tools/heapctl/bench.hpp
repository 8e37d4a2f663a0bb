#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace heapctl {

struct BenchOptions {
  std::string path;
  char workload = 'a';
  std::uint64_t ops = 1000;
  unsigned threads = 1;
  std::uint64_t seed = 1;
  std::uint64_t records = 1000;
  // Fields written by each update transaction, on distinct records.
  unsigned tx_writes = 1;
  bool baseline = false;
  bool force_lock = false;
};

/// Runs one workload. Schema setup and loading happen before the fence
/// counter is sampled, so `fence_total` covers the measured ops only.
/// Throws BenchError carrying the library status on failure.
nlohmann::json run_bench(const BenchOptions& options);

struct BenchError {
  int status;
  std::string message;
};

}  // namespace heapctl
