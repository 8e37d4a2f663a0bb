#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>

namespace uniheap {

/// Stop-the-world gate. Mutators hold it shared for the span of a
/// transaction (or a single atomic update); the collector holds it
/// exclusively. A pending stop blocks new entries so the collector cannot be
/// starved by a steady stream of transactions.
class SafepointGate {
 public:
  void enter() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !stopped_ && stop_waiters_ == 0; });
    ++active_;
  }

  void leave() {
    std::lock_guard lock(mu_);
    if (--active_ == 0) cv_.notify_all();
  }

  void stop_world() {
    std::unique_lock lock(mu_);
    ++stop_waiters_;
    cv_.wait(lock, [&] { return !stopped_ && active_ == 0; });
    --stop_waiters_;
    stopped_ = true;
  }

  void resume() {
    std::lock_guard lock(mu_);
    stopped_ = false;
    cv_.notify_all();
  }

  std::uint64_t active() const {
    std::lock_guard lock(mu_);
    return active_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t active_ = 0;
  std::uint64_t stop_waiters_ = 0;
  bool stopped_ = false;
};

/// RAII shared hold on the gate.
class SafepointScope {
 public:
  explicit SafepointScope(SafepointGate& gate) : gate_(&gate) { gate_->enter(); }
  SafepointScope(const SafepointScope&) = delete;
  SafepointScope& operator=(const SafepointScope&) = delete;
  ~SafepointScope() { gate_->leave(); }

 private:
  SafepointGate* gate_;
};

/// RAII exclusive hold on the gate.
class StopTheWorld {
 public:
  explicit StopTheWorld(SafepointGate& gate) : gate_(&gate) { gate_->stop_world(); }
  StopTheWorld(const StopTheWorld&) = delete;
  StopTheWorld& operator=(const StopTheWorld&) = delete;
  ~StopTheWorld() { gate_->resume(); }

 private:
  SafepointGate* gate_;
};

}  // namespace uniheap
