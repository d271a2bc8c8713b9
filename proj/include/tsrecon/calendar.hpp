#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "tsrecon/error.hpp"

namespace tsrecon {

/// Calendar dates are UTC civil dates.
using Date = std::chrono::year_month_day;

inline constexpr double kSecondsPerDay = 86400.0;

inline std::int64_t epoch_day(const Date& d) {
  return std::chrono::sys_days{d}.time_since_epoch().count();
}

inline Date date_from_epoch_day(std::int64_t day) {
  return Date{std::chrono::sys_days{std::chrono::days{day}}};
}

inline Date make_date(int y, unsigned m, unsigned d) {
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error("invalid calendar date");
  return date;
}

/// Seconds since the Unix epoch of 00:00:00 UTC on the given date.
inline double midnight_epoch(const Date& d) {
  return static_cast<double>(epoch_day(d)) * kSecondsPerDay;
}

/// UTC calendar date containing the epoch instant.
inline Date date_of(double epoch_seconds) {
  return date_from_epoch_day(static_cast<std::int64_t>(std::floor(epoch_seconds / kSecondsPerDay)));
}

/// 1-based ordinal day within the year (1..366).
inline int day_of_year(const Date& d) {
  const Date jan1{d.year(), std::chrono::January, std::chrono::day{1}};
  return static_cast<int>(epoch_day(d) - epoch_day(jan1)) + 1;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

/// Accepts YYYY-MM-DD.
inline Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw Error("expected date YYYY-MM-DD, got '" + s + "'");
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error("invalid calendar date '" + s + "'");
  return date;
}

/// Epoch seconds, or ISO-8601 `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]`
/// (a bare date means midnight UTC).
inline double parse_timestamp(std::string_view text) {
  const std::string s(text);
  if (s.empty()) throw Error("empty timestamp");
  if (s.size() >= 10 && s[4] == '-' && s[7] == '-') {
    const Date date = parse_date(s.substr(0, 10));
    double t = midnight_epoch(date);
    if (s.size() == 10) return t;
    if (s[10] != 'T' && s[10] != ' ') throw Error("malformed ISO-8601 timestamp '" + s + "'");
    int hh = 0, mm = 0;
    double ss = 0.0;
    int consumed = 0;
    if (std::sscanf(s.c_str() + 11, "%d:%d:%lf%n", &hh, &mm, &ss, &consumed) != 3)
      throw Error("malformed ISO-8601 time in '" + s + "'");
    t += hh * 3600.0 + mm * 60.0 + ss;
    const std::string zone = s.substr(11 + static_cast<std::size_t>(consumed));
    if (zone.empty() || zone == "Z") return t;
    int zh = 0, zm = 0;
    if ((zone[0] == '+' || zone[0] == '-') &&
        std::sscanf(zone.c_str() + 1, "%d:%d", &zh, &zm) == 2) {
      const double offset = zh * 3600.0 + zm * 60.0;
      return zone[0] == '+' ? t - offset : t + offset;
    }
    throw Error("unsupported time zone suffix in '" + s + "'");
  }
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw Error("not a timestamp: '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(value)) throw Error("not a timestamp: '" + s + "'");
  return value;
}

/// Epoch seconds with millisecond resolution, the serialized form for global time.
inline std::string format_epoch(double epoch_seconds) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", epoch_seconds);
  return buf;
}

}  // namespace tsrecon
