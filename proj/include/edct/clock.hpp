#pragma once

#include <atomic>
#include <chrono>
#include <thread>

namespace edct {

/// Time source for rate limiting and backoff, swappable for simulation.
class Clock {
public:
  using duration = std::chrono::nanoseconds;
  using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(duration d) = 0;
};

class SteadyClock final : public Clock {
public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(duration d) override { std::this_thread::sleep_for(d); }
};

/// Sleeping advances simulated time instantly.
class SimulatedClock final : public Clock {
public:
  time_point now() override { return time_point(duration(ticks_.load())); }
  void sleep_for(duration d) override {
    if (d.count() > 0) ticks_.fetch_add(d.count());
  }
  void advance(duration d) { sleep_for(d); }

private:
  std::atomic<duration::rep> ticks_{0};
};

}  // namespace edct
