#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace agm {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// Formats as RFC 3339 UTC with millisecond precision, e.g.
/// "2024-01-01T00:00:05.250Z".
std::string format_timestamp(Timestamp t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff...]Z". Offsets other than Z are rejected.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Seconds (possibly fractional) between two timestamps, b - a.
double seconds_between(Timestamp a, Timestamp b);

Timestamp add_seconds(Timestamp t, double seconds);

/// Epoch used by simulated clocks; simulation time t maps to sim_epoch() + t.
Timestamp sim_epoch();

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
};

/// Externally driven clock. Never moves backwards: set() with an earlier
/// instant is ignored.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start = sim_epoch()) : ms_(start.time_since_epoch().count()) {}

  Timestamp now() const override {
    return Timestamp{std::chrono::milliseconds{ms_.load(std::memory_order_acquire)}};
  }

  /// Returns false when `t` is earlier than the current reading.
  bool set(Timestamp t);
  void advance(double seconds) { set(add_seconds(now(), seconds)); }

 private:
  std::atomic<std::int64_t> ms_;
};

}  // namespace agm
