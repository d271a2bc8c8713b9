#pragma once

// Whole-day offset correction by matching daily soil-moisture wetting events
// against daily rainfall with cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tsrecon/calendar.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

struct TimedValue {
  GlobalTimestamp gts = 0.0;
  double value = 0.0;
};

/// Non-negative weight per calendar day starting at `start_day` (days since epoch).
struct DailyEventVector {
  std::int64_t start_day = 0;
  std::vector<double> weights;

  bool has_events() const {
    return std::any_of(weights.begin(), weights.end(), [](double w) { return w > 0.0; });
  }
};

enum class Aggregation {
  rise,   ///< positive day-over-day increase of the daily maximum, when above threshold
  total,  ///< daily sum, kept when above threshold
};

struct DayCorrectionConfig {
  double sm_threshold = 0.0;
  double ppt_threshold = 4.0;  ///< cm
  int window = 7;              ///< lags searched in [-window, +window]
  Aggregation sm_aggregation = Aggregation::rise;
};

inline void validate(const DayCorrectionConfig& cfg) {
  if (cfg.sm_threshold < 0.0 || !(cfg.ppt_threshold > 0.0)) throw Error("day correction: thresholds must be positive");
  if (cfg.window < 1) throw Error("day correction: window must be at least 1 day");
}

inline DailyEventVector daily_event_vector(std::span<const TimedValue> series, double threshold, Aggregation aggregation) {
  if (series.empty()) throw Error("daily event vector: empty series");
  std::map<std::int64_t, std::pair<double, double>> days;  // day -> (max, sum)
  for (const auto& x : series) {
    const auto day = static_cast<std::int64_t>(std::floor(x.gts / kSecondsPerDay));
    auto [it, fresh] = days.try_emplace(day, x.value, 0.0);
    if (!fresh) it->second.first = std::max(it->second.first, x.value);
    it->second.second += x.value;
  }
  DailyEventVector v;
  v.start_day = days.begin()->first;
  v.weights.assign(static_cast<std::size_t>(days.rbegin()->first - v.start_day + 1), 0.0);
  for (auto it = days.begin(); it != days.end(); ++it) {
    const auto slot = static_cast<std::size_t>(it->first - v.start_day);
    if (aggregation == Aggregation::total) {
      if (it->second.second > threshold) v.weights[slot] = it->second.second;
    } else {
      const auto prev = days.find(it->first - 1);
      if (prev == days.end()) continue;
      const double today = it->second.first;
      const double rise = today - prev->second.first;
      if (today > threshold && rise > 0.0) v.weights[slot] = rise;
    }
  }
  return v;
}

/// cos(a, b shifted): a's day t is compared with b's day t + lag (calendar
/// days). Undefined when the overlap is empty or either side is all zero there.
inline std::optional<double> cosine_similarity(const DailyEventVector& a, const DailyEventVector& b, int lag) {
  const std::int64_t a_end = a.start_day + static_cast<std::int64_t>(a.weights.size());
  const std::int64_t b_end = b.start_day + static_cast<std::int64_t>(b.weights.size()) - lag;
  const std::int64_t first = std::max(a.start_day, b.start_day - lag);
  const std::int64_t last = std::min(a_end, b_end);
  if (last <= first) return std::nullopt;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::int64_t t = first; t < last; ++t) {
    const double x = a.weights[static_cast<std::size_t>(t - a.start_day)];
    const double y = b.weights[static_cast<std::size_t>(t + lag - b.start_day)];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (!(na > 0.0) || !(nb > 0.0)) return std::nullopt;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

struct DayShift {
  int lag = 0;
  double theta = 0.0;
  std::vector<std::pair<int, std::optional<double>>> table;  ///< theta per searched lag
};

/// Shift in [-window, window] maximising the similarity between the moisture
/// vector (in reconstructed time) and rainfall. A positive lag means the
/// reconstruction runs `lag` days early. Ties prefer smaller |lag|, then the
/// negative lag.
inline DayShift best_day_shift(const DailyEventVector& sm, const DailyEventVector& ppt, const DayCorrectionConfig& cfg) {
  validate(cfg);
  if (!sm.has_events()) throw Error("day correction: soil moisture vector has no events above threshold");
  if (!ppt.has_events()) throw Error("day correction: rainfall vector has no events above threshold");
  DayShift out;
  bool found = false;
  for (int lag = -cfg.window; lag <= cfg.window; ++lag) {
    const auto theta = cosine_similarity(sm, ppt, lag);
    out.table.emplace_back(lag, theta);
    if (!theta) continue;
    const bool better = !found || *theta > out.theta ||
                        (*theta == out.theta && (std::abs(lag) < std::abs(out.lag) ||
                                                 (std::abs(lag) == std::abs(out.lag) && lag < out.lag)));
    if (better) {
      out.lag = lag;
      out.theta = *theta;
      found = true;
    }
  }
  if (!found) throw Error("day correction: no lag in the window has a defined similarity");
  return out;
}

inline LinearFit apply_day_shift(const LinearFit& fit, int lag) {
  return LinearFit{fit.alpha, fit.beta + static_cast<double>(lag) * kSecondsPerDay};
}

}  // namespace tsrecon
