#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "solar_reference.hpp"
#include "tsrecon/solar_model.hpp"

using namespace tsrecon;

namespace {

const GeoLocation kMaryland{39.3, -76.6};

int sign_changes(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if ((v[i - 1] - mean) * (v[i] - mean) < 0.0) ++n;
  // the series wraps around the year, so count the closing edge as well
  if ((v.back() - mean) * (v.front() - mean) < 0.0) ++n;
  return n;
}

}  // namespace

TEST(Declination, Equinox) { EXPECT_NEAR(solar_declination(80), 0.0, 0.5); }
TEST(Declination, JuneSolstice) { EXPECT_NEAR(solar_declination(172), 23.4, 0.5); }
TEST(Declination, DecemberSolstice) { EXPECT_NEAR(solar_declination(355), -23.4, 0.5); }

TEST(Declination, Bounded) {
  for (int d = 1; d <= 366; ++d) {
    EXPECT_LE(solar_declination(d), 23.45);
    EXPECT_GE(solar_declination(d), -23.45);
  }
}

TEST(EquationOfTime, AnnualMeanNearZero) {
  double sum = 0.0;
  for (int d = 1; d <= 365; ++d) sum += equation_of_time(d);
  EXPECT_LT(std::abs(sum / 365.0), 1.0);
}

TEST(EquationOfTime, MidFebruaryAndEarlyNovember) {
  EXPECT_NEAR(equation_of_time(46), -14.0, 1.0);
  EXPECT_NEAR(equation_of_time(307), 16.0, 1.0);
}

TEST(EquationOfTime, Bounded) {
  for (int d = 1; d <= 366; ++d) EXPECT_LE(std::abs(equation_of_time(d)), 20.0);
}

TEST(LengthOfDay, EquatorGeometricHorizon) {
  for (unsigned m = 1; m <= 12; ++m) {
    const auto lod = length_of_day({0.0, 0.0}, make_date(2007, m, 10), Zenith{Zenith::kGeometric});
    EXPECT_NEAR(lod.seconds, 43200.0, 1e-6);
    EXPECT_EQ(lod.polar, PolarState::none);
  }
}

TEST(LengthOfDay, MarylandJuneSolstice) {
  const auto lod = length_of_day(kMaryland, make_date(2007, 6, 21));
  EXPECT_NEAR(lod.seconds / 3600.0, 14.9, 5.0 / 60.0);
}

TEST(LengthOfDay, PolarDayAndNight) {
  const auto day = length_of_day({80.0, 0.0}, make_date(2007, 6, 21));
  EXPECT_EQ(day.seconds, 86400.0);
  EXPECT_EQ(day.polar, PolarState::polar_day);
  const auto night = length_of_day({80.0, 0.0}, make_date(2007, 12, 21));
  EXPECT_EQ(night.seconds, 0.0);
  EXPECT_EQ(night.polar, PolarState::polar_night);
}

TEST(LengthOfDay, EquinoxNearTwelveHours) {
  // Equinox days are where the model's own declination is closest to zero.
  std::vector<Date> equinoxes;
  for (auto [from, to] : {std::pair{60, 100}, std::pair{250, 290}}) {
    int best = from;
    for (int d = from; d <= to; ++d)
      if (std::abs(solar_declination(d)) < std::abs(solar_declination(best))) best = d;
    equinoxes.push_back(date_from_epoch_day(epoch_day(make_date(2007, 1, 1)) + best - 1));
  }
  for (double lat = -60.0; lat <= 60.0; lat += 10.0)
    for (const Date d : equinoxes)
      EXPECT_NEAR(length_of_day({lat, 0.0}, d).seconds, 43200.0, 15.0 * 60.0) << lat << " " << format_date(d);
}

TEST(LengthOfDay, HemisphericSymmetry) {
  for (double lat = 10.0; lat <= 60.0; lat += 10.0) {
    double worst = 0.0;
    std::string worst_date;
    for (int k = 0; k < 365; ++k) {
      const Date d = date_from_epoch_day(epoch_day(make_date(2007, 1, 1)) + k);
      const Date h = date_from_epoch_day(epoch_day(d) + 183);
      const double diff = std::abs(length_of_day({lat, 0.0}, d).seconds - length_of_day({-lat, 0.0}, h).seconds);
      if (diff > worst) {
        worst = diff;
        worst_date = format_date(d);
      }
    }
    EXPECT_LE(worst, 120.0) << "latitude " << lat << ", worst on " << worst_date;
  }
}

TEST(SolarNoon, Greenwich) {
  const Date d = make_date(2007, 4, 15);
  EXPECT_NEAR(solar_noon({0.0, 0.0}, d) + equation_of_time(day_of_year(d)) * 60.0, midnight_epoch(d) + 43200.0, 1e-6);
}

TEST(SolarNoon, PureLongitudeOffset) {
  const Date d = make_date(2007, 4, 15);
  const double eot = detail::eot_minutes(detail::year_angle(day_of_year(d), detail::local_noon_hour(kMaryland)));
  EXPECT_NEAR(solar_noon(kMaryland, d) + eot * 60.0, midnight_epoch(d) + 17 * 3600 + 6 * 60 + 24, 1e-6);
}

TEST(SolarNoon, TwoCyclesPerYear) {
  std::vector<double> noon, lod;
  for (const auto& s : model_series({0.0, 0.0}, make_date(2007, 1, 1), make_date(2007, 12, 31))) {
    noon.push_back(s.noon - midnight_epoch(s.date));
    lod.push_back(s.lod);
  }
  EXPECT_EQ(sign_changes(noon), 4);
  std::vector<double> lod_md;
  for (const auto& s : model_series(kMaryland, make_date(2007, 1, 1), make_date(2007, 12, 31))) lod_md.push_back(s.lod);
  EXPECT_EQ(sign_changes(lod_md), 2);
}

TEST(SolarDay, Invariants) {
  for (const GeoLocation loc : {kMaryland, GeoLocation{-45.0, 170.0}, GeoLocation{0.0, 0.0}})
    for (const auto& s : model_series(loc, make_date(2007, 1, 1), make_date(2007, 12, 31))) {
      EXPECT_NEAR(s.sunset - s.sunrise, s.lod, 1.0);
      EXPECT_NEAR(0.5 * (s.sunrise + s.sunset), s.noon, 60.0);
      EXPECT_LT(s.sunrise, s.noon);
      EXPECT_LT(s.noon, s.sunset);
      EXPECT_GE(s.lod, 0.0);
      EXPECT_LE(s.lod, 86400.0);
    }
}

TEST(ModelSeries, OneDayRange) {
  const Date d = make_date(2007, 5, 5);
  const auto s = model_series(kMaryland, d, d);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.front().date, d);
}

TEST(ModelSeries, InclusiveAndOrdered) {
  const auto s = model_series(kMaryland, make_date(2006, 1, 1), make_date(2008, 6, 30));
  EXPECT_EQ(s.size(), 365u + 365u + 182u);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_EQ(epoch_day(s[i].date), epoch_day(s[i - 1].date) + 1);
}

TEST(ModelSeries, LodPeaksAtJuneSolstice) {
  for (int year : {2006, 2007}) {
    const auto s = model_series(kMaryland, make_date(year, 1, 1), make_date(year, 12, 31));
    const auto it = std::max_element(s.begin(), s.end(), [](const SolarDay& a, const SolarDay& b) { return a.lod < b.lod; });
    EXPECT_NEAR(static_cast<double>(epoch_day(it->date) - epoch_day(make_date(year, 6, 21))), 0.0, 4.0);
  }
}

TEST(ModelSeries, StartAfterEndThrows) {
  EXPECT_THROW(model_series(kMaryland, make_date(2007, 2, 1), make_date(2007, 1, 1)), Error);
}

TEST(Validate, RangesAndZenith) {
  EXPECT_THROW(validate(GeoLocation{91.0, 0.0}), Error);
  EXPECT_THROW(validate(GeoLocation{0.0, -181.0}), Error);
  EXPECT_THROW(validate(Zenith{88.0}), Error);
  EXPECT_NO_THROW(validate(Zenith{Zenith::kGeometric}));
}

TEST(Reference, TwelveDatesWithinFiveMinutes) {
  const GeoLocation loc{solar_reference::kLatitude, solar_reference::kLongitude};
  for (const auto& r : solar_reference::kRows) {
    const auto s = solar_day(loc, make_date(r.year, r.month, r.day));
    EXPECT_NEAR(s.lod, r.lod, 300.0) << r.month;
    EXPECT_NEAR(s.noon, r.noon, 300.0) << r.month;
  }
}
