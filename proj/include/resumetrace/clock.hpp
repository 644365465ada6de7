#pragma once

#include <cstdint>
#include <memory>
#include <mutex>

namespace resumetrace {

// Injected time source. Simulator, scanner, and fixtures never read the
// system clock directly, so revisit schedules spanning hours can run in
// virtual time during tests.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
  virtual void sleep_ms(std::int64_t ms) = 0;

  std::int64_t now_s() { return now_ms() / 1000; }
};

class RealClock final : public Clock {
 public:
  std::int64_t now_ms() override;
  void sleep_ms(std::int64_t ms) override;
};

// Accelerated clock: sleep_ms advances time and returns immediately.
// Thread-safe; one instance is shared between a scanner and the fixtures
// it probes so both sides agree on elapsed time.
class SimClock final : public Clock {
 public:
  explicit SimClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() override {
    std::lock_guard lk(mu_);
    return now_;
  }

  void sleep_ms(std::int64_t ms) override { advance_ms(ms); }

  void advance_ms(std::int64_t ms) {
    std::lock_guard lk(mu_);
    now_ += ms;
  }

 private:
  std::mutex mu_;
  std::int64_t now_;
};

// Process-wide real clock instance.
std::shared_ptr<Clock> real_clock();

}  // namespace resumetrace
