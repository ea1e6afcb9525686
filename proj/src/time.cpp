#include "agm/time.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace agm {

using namespace std::chrono;

std::string format_timestamp(Timestamp t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto ms = (t - day).count();
  const long long h = ms / 3'600'000;
  const long long m = (ms / 60'000) % 60;
  const long long s = (ms / 1000) % 60;
  const long long frac = ms % 1000;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), h, m, s, frac);
  return buf;
}

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
    v = v * 10 + (text[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  int Y, M, D, h, m, s;
  if (text.size() < 20) return std::nullopt;
  if (!read_int(text, 0, 4, Y) || text[4] != '-' || !read_int(text, 5, 2, M) || text[7] != '-' ||
      !read_int(text, 8, 2, D) || (text[10] != 'T' && text[10] != 't') || !read_int(text, 11, 2, h) ||
      text[13] != ':' || !read_int(text, 14, 2, m) || text[16] != ':' || !read_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  int millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 3) millis = millis * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 3; ++i) millis *= 10;
  }
  if (pos + 1 != text.size() || (text[pos] != 'Z' && text[pos] != 'z')) return std::nullopt;
  if (h > 23 || m > 59 || s > 59) return std::nullopt;
  const year_month_day ymd{year{Y}, month{unsigned(M)}, day{unsigned(D)}};
  if (!ymd.ok()) return std::nullopt;
  return Timestamp{sys_days{ymd}.time_since_epoch()} + hours{h} + minutes{m} + seconds{s} +
         milliseconds{millis};
}

double seconds_between(Timestamp a, Timestamp b) {
  return static_cast<double>((b - a).count()) / 1000.0;
}

Timestamp add_seconds(Timestamp t, double seconds) {
  return t + milliseconds{static_cast<std::int64_t>(std::llround(seconds * 1000.0))};
}

Timestamp sim_epoch() {
  return Timestamp{sys_days{year{2024} / January / 1}.time_since_epoch()};
}

Timestamp SystemClock::now() const {
  return time_point_cast<milliseconds>(system_clock::now());
}

bool ManualClock::set(Timestamp t) {
  const auto want = t.time_since_epoch().count();
  auto cur = ms_.load(std::memory_order_acquire);
  while (cur <= want) {
    if (ms_.compare_exchange_weak(cur, want, std::memory_order_acq_rel)) return true;
  }
  return false;
}

}  // namespace agm
