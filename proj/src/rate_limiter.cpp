#include "edct/rate_limiter.hpp"

#include "edct/error.hpp"

namespace edct {

SlidingWindowRateLimiter::SlidingWindowRateLimiter(std::size_t cap, Clock::duration window, Clock& clock)
    : cap_(cap), window_(window), clock_(clock) {
  require(cap > 0, "rate limit cap must be positive");
}

Clock::time_point SlidingWindowRateLimiter::acquire() {
  std::lock_guard lock(mutex_);
  for (;;) {
    const auto now = clock_.now();
    // An admission at t occupies the window (t - window, t].
    while (!admitted_.empty() && admitted_.front() + window_ <= now) admitted_.pop_front();
    if (admitted_.size() < cap_) {
      admitted_.push_back(now);
      return now;
    }
    clock_.sleep_for(admitted_.front() + window_ - now);
  }
}

}  // namespace edct
