#include "resumetrace/clock.hpp"

#include <chrono>
#include <thread>

namespace resumetrace {

std::int64_t RealClock::now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void RealClock::sleep_ms(std::int64_t ms) {
  if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

std::shared_ptr<Clock> real_clock() {
  static std::shared_ptr<Clock> instance = std::make_shared<RealClock>();
  return instance;
}

}  // namespace resumetrace
