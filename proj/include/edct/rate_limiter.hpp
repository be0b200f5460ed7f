#pragma once

#include "edct/clock.hpp"

#include <deque>
#include <mutex>

namespace edct {

/// Admits at most `cap` acquisitions in any window of length `window`.
class SlidingWindowRateLimiter {
public:
  SlidingWindowRateLimiter(std::size_t cap, Clock::duration window, Clock& clock);

  /// Blocks (via the clock) until a slot is free, then records the admission.
  /// Returns the admission time.
  Clock::time_point acquire();

private:
  std::size_t cap_;
  Clock::duration window_;
  Clock& clock_;
  std::mutex mutex_;
  std::deque<Clock::time_point> admitted_;
};

}  // namespace edct
