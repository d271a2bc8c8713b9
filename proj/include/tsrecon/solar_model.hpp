#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tsrecon/calendar.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

struct GeoLocation {
  double latitude = 0.0;   ///< degrees, north positive
  double longitude = 0.0;  ///< degrees, east positive
};

inline void validate(const GeoLocation& loc) {
  if (!(loc.latitude >= -90.0 && loc.latitude <= 90.0)) throw Error("latitude outside [-90, 90]");
  if (!(loc.longitude >= -180.0 && loc.longitude <= 180.0)) throw Error("longitude outside [-180, 180]");
}

/// Sun-centre zenith angle that defines sunrise and sunset.
struct Zenith {
  static constexpr double kOfficial = 90.833;  // refraction + solar disc radius
  static constexpr double kGeometric = 90.0;
  double degrees = kOfficial;
};

inline void validate(const Zenith& z) {
  if (!(z.degrees >= 89.0 && z.degrees <= 108.0)) throw Error("zenith angle outside [89, 108] degrees");
}

enum class PolarState { none, polar_day, polar_night };

struct DayLength {
  double seconds = 0.0;
  PolarState polar = PolarState::none;
};

struct SolarDay {
  Date date;
  double lod = 0.0;  ///< seconds
  GlobalTimestamp noon = 0.0;
  GlobalTimestamp sunrise = 0.0;
  GlobalTimestamp sunset = 0.0;
  PolarState polar = PolarState::none;
};

namespace detail {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Fractional-year angle (radians); `hour_utc` selects the instant within the day.
inline double year_angle(int day_of_year, double hour_utc) {
  return 2.0 * std::numbers::pi / 365.0 * (day_of_year - 1 + (hour_utc - 12.0) / 24.0);
}

inline double declination_rad(double g) {
  return 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
         0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);
}

inline double eot_minutes(double g) {
  return 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                   0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
}

inline constexpr double kMaxDeclination = 23.45;

inline double declination_deg(double g) {
  return std::clamp(declination_rad(g) / kDeg, -kMaxDeclination, kMaxDeclination);
}

/// UTC hour at which mean local noon occurs.
inline double local_noon_hour(const GeoLocation& loc) { return 12.0 - loc.longitude / 15.0; }

}  // namespace detail

/// Solar declination in degrees at 12:00 UTC of the given day (Spencer series).
inline double solar_declination(int day_of_year) {
  return detail::declination_deg(detail::year_angle(day_of_year, 12.0));
}

/// Equation of time in minutes at 12:00 UTC; positive when true solar noon
/// precedes mean noon.
inline double equation_of_time(int day_of_year) {
  return detail::eot_minutes(detail::year_angle(day_of_year, 12.0));
}

/// Sunrise-to-sunset duration from the hour-angle equation
/// cos w = (cos z - sin lat sin dec) / (cos lat cos dec). Latitudes where the
/// sun never crosses the zenith circle clamp to 0 or 86400 s with a flag.
inline DayLength length_of_day(const GeoLocation& loc, const Date& date, Zenith zenith = {}) {
  validate(loc);
  validate(zenith);
  using detail::kDeg;
  const double g = detail::year_angle(day_of_year(date), detail::local_noon_hour(loc));
  const double dec = detail::declination_deg(g) * kDeg;
  const double lat = loc.latitude * kDeg;
  const double denom = std::cos(lat) * std::cos(dec);
  const double num = std::cos(zenith.degrees * kDeg) - std::sin(lat) * std::sin(dec);
  if (std::abs(denom) < 1e-12 || num / denom <= -1.0) return {kSecondsPerDay, PolarState::polar_day};
  if (num / denom >= 1.0) return {0.0, PolarState::polar_night};
  const double hour_angle_deg = std::acos(num / denom) / kDeg;
  return {2.0 * hour_angle_deg * 240.0, PolarState::none};
}

/// Instant of solar noon on `date`: 12:00 UTC shifted by longitude and the equation of time.
inline GlobalTimestamp solar_noon(const GeoLocation& loc, const Date& date) {
  validate(loc);
  const double g = detail::year_angle(day_of_year(date), detail::local_noon_hour(loc));
  return midnight_epoch(date) + 43200.0 - loc.longitude * 240.0 - detail::eot_minutes(g) * 60.0;
}

inline SolarDay solar_day(const GeoLocation& loc, const Date& date, Zenith zenith = {}) {
  const DayLength len = length_of_day(loc, date, zenith);
  const GlobalTimestamp noon = solar_noon(loc, date);
  return SolarDay{date, len.seconds, noon, noon - len.seconds / 2.0, noon + len.seconds / 2.0, len.polar};
}

/// One SolarDay per calendar day in [first, last].
inline std::vector<SolarDay> model_series(const GeoLocation& loc, const Date& first, const Date& last,
                                          Zenith zenith = {}) {
  const auto d0 = epoch_day(first);
  const auto d1 = epoch_day(last);
  if (d1 < d0) throw Error("model range end precedes start");
  std::vector<SolarDay> out;
  out.reserve(static_cast<std::size_t>(d1 - d0 + 1));
  for (auto d = d0; d <= d1; ++d) out.push_back(solar_day(loc, date_from_epoch_day(d), zenith));
  return out;
}

}  // namespace tsrecon
