#pragma once

// Per-day sunrise, sunset, noon and length-of-day extraction from a light
// sensor series expressed in local-clock seconds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsrecon/calendar.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

struct LightSample {
  LocalTimestamp lts = 0.0;
  double value = 0.0;
};

struct LightSeries {
  std::vector<LightSample> samples;
  double sampling_interval = 0.0;  ///< nominal seconds between samples
};

inline void validate(const LightSeries& s) {
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const auto& x = s.samples[i];
    if (!std::isfinite(x.lts) || !std::isfinite(x.value) || x.value < 0.0)
      throw Error("light series: sample " + std::to_string(i) + " is not a finite non-negative reading");
    if (i > 0 && !(x.lts > s.samples[i - 1].lts))
      throw Error("light series: local timestamps must be strictly increasing");
  }
  if (!(s.sampling_interval > 0.0)) throw Error("light series: sampling interval must be positive");
}

enum class ThresholdMode { fraction_of_range, absolute };

struct ExtractionConfig {
  int smooth_window = 5;
  ThresholdMode threshold_mode = ThresholdMode::fraction_of_range;
  double threshold_value = 0.2;
  int min_day_samples = 0;           ///< 0 selects half the nominal samples per day
  double min_lod = 7.0 * 3600.0;
  double max_lod = 17.0 * 3600.0;
  double min_dark_run = 4.0 * 3600.0;
  double min_relative_range = 0.2;   ///< daily range below this share of the median range is suspect
};

inline void validate(const ExtractionConfig& cfg) {
  if (cfg.smooth_window < 1 || cfg.smooth_window % 2 == 0) throw Error("extraction: smooth_window must be odd and >= 1");
  if (cfg.threshold_mode == ThresholdMode::fraction_of_range &&
      !(cfg.threshold_value > 0.0 && cfg.threshold_value < 1.0))
    throw Error("extraction: threshold fraction must lie in (0, 1)");
  if (!(cfg.min_lod < cfg.max_lod)) throw Error("extraction: min_lod must be below max_lod");
  if (cfg.min_day_samples < 0) throw Error("extraction: min_day_samples must be non-negative");
}

enum class DayQuality { ok, missing, suspect };

inline const char* to_string(DayQuality q) {
  switch (q) {
    case DayQuality::ok: return "ok";
    case DayQuality::missing: return "missing";
    case DayQuality::suspect: return "suspect";
  }
  return "?";
}

struct DiurnalFeature {
  int day_index = 0;
  LocalTimestamp sunrise_lts = std::numeric_limits<double>::quiet_NaN();
  LocalTimestamp sunset_lts = std::numeric_limits<double>::quiet_NaN();
  LocalTimestamp noon_lts = std::numeric_limits<double>::quiet_NaN();
  double lod_lt = std::numeric_limits<double>::quiet_NaN();
  DayQuality quality = DayQuality::missing;
};

/// Sample range [begin, end) forming one diurnal window.
struct DayWindow {
  int day_index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  DayQuality quality = DayQuality::ok;
};

/// Centred moving average over `window` samples; edge samples average the
/// part of the window that exists.
inline LightSeries smooth(const LightSeries& series, int window) {
  if (series.samples.empty()) throw Error("smooth: empty series");
  if (window < 1 || window % 2 == 0) throw Error("smooth: window must be odd and >= 1");
  const std::size_t n = series.samples.size();
  if (static_cast<std::size_t>(window) > n) throw Error("smooth: window longer than series");
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series.samples[i].value;
  const std::size_t half = static_cast<std::size_t>(window / 2);
  LightSeries out{series.samples, series.sampling_interval};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    out.samples[i].value = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

/// Central differences, one-sided at the ends.
inline std::vector<LightSample> derivative(const LightSeries& series) {
  const auto& s = series.samples;
  if (s.size() < 3) throw Error("derivative: need at least three samples");
  std::vector<LightSample> d(s.size());
  const std::size_t n = s.size();
  d[0] = {s[0].lts, (s[1].value - s[0].value) / (s[1].lts - s[0].lts)};
  for (std::size_t i = 1; i + 1 < n; ++i)
    d[i] = {s[i].lts, (s[i + 1].value - s[i - 1].value) / (s[i + 1].lts - s[i - 1].lts)};
  d[n - 1] = {s[n - 1].lts, (s[n - 1].value - s[n - 2].value) / (s[n - 1].lts - s[n - 2].lts)};
  return d;
}

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

/// Series-wide level separating night from day.
inline double dark_level(const LightSeries& smoothed, const ExtractionConfig& cfg) {
  if (cfg.threshold_mode == ThresholdMode::absolute) return cfg.threshold_value;
  std::vector<double> v;
  v.reserve(smoothed.samples.size());
  for (const auto& x : smoothed.samples) v.push_back(x.value);
  const double lo = quantile(v, 0.01);
  const double hi = quantile(v, 0.99);
  return lo + cfg.threshold_value * (hi - lo);
}

inline int min_samples_per_day(const LightSeries& series, const ExtractionConfig& cfg) {
  if (cfg.min_day_samples > 0) return cfg.min_day_samples;
  return std::max(1, static_cast<int>(std::floor(kSecondsPerDay / series.sampling_interval / 2.0)));
}

/// Circular mean of timestamps modulo one day, in [0, 86400).
inline double day_phase(std::span<const double> times) {
  double c = 0.0, s = 0.0;
  for (double t : times) {
    const double a = 2.0 * std::numbers::pi * t / kSecondsPerDay;
    c += std::cos(a);
    s += std::sin(a);
  }
  double phase = std::atan2(s, c) / (2.0 * std::numbers::pi) * kSecondsPerDay;
  if (phase < 0.0) phase += kSecondsPerDay;
  return phase;
}

}  // namespace detail

/// Cuts the series into diurnal windows. Boundaries sit at the midpoints of
/// dark runs lasting at least `min_dark_run`; a data gap ends a run. Each
/// window is numbered by the day its light centroid falls in, using a common
/// phase so that slow clock drift cannot make two windows share an index.
inline std::vector<DayWindow> segment_days(const LightSeries& series, const ExtractionConfig& cfg) {
  validate(cfg);
  if (series.samples.empty()) throw Error("segment_days: empty series");
  validate(series);
  const std::size_t n = series.samples.size();
  const LightSeries sm =
      smooth(series, std::min<int>(cfg.smooth_window, static_cast<int>(n % 2 ? n : n - 1)));
  const auto& s = sm.samples;
  const double level = detail::dark_level(sm, cfg);
  const double max_gap = 2.0 * series.sampling_interval;
  const auto [lo_it, hi_it] =
      std::minmax_element(s.begin(), s.end(), [](const LightSample& a, const LightSample& b) { return a.value < b.value; });
  if (!(hi_it->value > lo_it->value)) return {DayWindow{0, 0, n, DayQuality::missing}};

  // Boundaries are sample indices; window k spans [cuts[k], cuts[k+1]).
  std::vector<std::size_t> cuts{0};
  std::size_t run_start = 0;
  bool in_run = false;
  auto close_run = [&](std::size_t last) {
    if (s[last].lts - s[run_start].lts >= cfg.min_dark_run) {
      const double mid = 0.5 * (s[run_start].lts + s[last].lts);
      std::size_t k = run_start;
      while (k <= last && s[k].lts < mid) ++k;
      if (k > cuts.back() && k < n) cuts.push_back(k);
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool gap = i > 0 && s[i].lts - s[i - 1].lts > max_gap;
    if (in_run && gap) {
      close_run(i - 1);
      in_run = false;
    }
    const bool dark = s[i].value < level;
    if (dark && !in_run) {
      run_start = i;
      in_run = true;
    } else if (!dark && in_run) {
      close_run(i - 1);
      in_run = false;
    }
  }
  if (in_run) close_run(n - 1);
  cuts.push_back(n);

  const int min_samples = detail::min_samples_per_day(series, cfg);
  std::vector<DayWindow> windows;
  std::vector<double> centres;
  std::vector<double> lit_centres;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const std::size_t b = cuts[k], e = cuts[k + 1];
    if (e <= b) continue;
    DayWindow w{0, b, e, DayQuality::ok};
    double lit_sum = 0.0;
    std::size_t lit_count = 0;
    for (std::size_t i = b; i < e; ++i) {
      if (s[i].value >= level) {
        lit_sum += s[i].lts;
        ++lit_count;
      }
      if (i > b && s[i].lts - s[i - 1].lts > max_gap) w.quality = DayQuality::suspect;
    }
    if (static_cast<int>(e - b) < min_samples || lit_count == 0) w.quality = DayQuality::missing;
    // A day cut off by the start or end of the series lacks a dark margin.
    else if (k == 0 || k + 2 == cuts.size()) {
      std::size_t head = b, tail = e - 1;
      while (head < e && s[head].value < level) ++head;
      while (tail > b && s[tail].value < level) --tail;
      const double margin = 0.5 * cfg.min_dark_run;
      if (head == b || tail == e - 1 || s[head].lts - s[b].lts < margin || s[e - 1].lts - s[tail].lts < margin)
        w.quality = DayQuality::suspect;
    }
    const double centre =
        lit_count ? lit_sum / static_cast<double>(lit_count) : 0.5 * (s[b].lts + s[e - 1].lts);
    if (lit_count) lit_centres.push_back(centre);
    centres.push_back(centre);
    windows.push_back(w);
  }

  const double phase = lit_centres.empty() ? 0.0 : detail::day_phase(lit_centres);
  for (std::size_t k = 0; k < windows.size(); ++k)
    windows[k].day_index = std::max(0, static_cast<int>(std::lround((centres[k] - phase) / kSecondsPerDay)));

  // Days with samples but no light above the dark level (overcast, storm)
  // sit inside one long dark run; give each its own suspect window.
  std::vector<DayWindow> filled;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    filled.push_back(windows[k]);
    if (k + 1 == windows.size()) break;
    for (int d = windows[k].day_index + 1; d < windows[k + 1].day_index; ++d) {
      const double from = phase + (d - 0.5) * kSecondsPerDay, to = from + kSecondsPerDay;
      std::size_t b = filled.back().begin;
      while (b < windows[k + 1].end && s[b].lts < from) ++b;
      std::size_t e = b;
      while (e < windows[k + 1].end && s[e].lts < to) ++e;
      if (e <= b || b <= filled.back().begin) continue;
      filled.back().end = std::min(filled.back().end, b);
      const bool enough = static_cast<int>(e - b) >= min_samples;
      filled.push_back(DayWindow{d, b, e, enough ? DayQuality::suspect : DayQuality::missing});
    }
    if (filled.back().day_index != windows[k].day_index)
      windows[k + 1].begin = std::max(windows[k + 1].begin, filled.back().end);
  }
  windows = std::move(filled);

  // Lit windows competing for one day index are all unreliable.
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (windows[k].quality == DayQuality::missing) continue;
    for (std::size_t j = k + 1; j < windows.size() && windows[j].day_index == windows[k].day_index; ++j) {
      if (windows[j].quality == DayQuality::missing) continue;
      for (auto* w : {&windows[k], &windows[j]})
        if (w->quality == DayQuality::ok) w->quality = DayQuality::suspect;
    }
  }
  return windows;
}

namespace detail {

inline double crossing(const LightSample& a, const LightSample& b, double level) {
  return a.lts + (level - a.value) / (b.value - a.value) * (b.lts - a.lts);
}

/// Sub-sample location of the extremum at i: centroid of the lobe above half
/// its peak. sign is +1 for a maximum, -1 for a minimum.
inline double refine_extremum(std::span<const LightSample> d, std::size_t i, std::size_t begin, std::size_t end,
                              double sign) {
  const double half = 0.5 * sign * d[i].value;
  if (!(half > 0.0)) return d[i].lts;
  std::size_t lo = i, hi = i;
  while (lo > begin && sign * d[lo - 1].value > half) --lo;
  while (hi + 1 < end && sign * d[hi + 1].value > half) ++hi;
  double wsum = 0.0, tsum = 0.0;
  for (std::size_t j = lo; j <= hi; ++j) {
    const double w = sign * d[j].value - half;
    wsum += w;
    tsum += w * d[j].lts;
  }
  return wsum > 0.0 ? tsum / wsum : d[i].lts;
}

}  // namespace detail

/// Hybrid extraction: noon is the midpoint of the steepest rise and the
/// steepest fall of the smoothed series; sunrise and sunset are the first
/// upward and last downward crossings of the daily threshold, interpolated
/// between samples.
inline std::vector<DiurnalFeature> extract_features(const LightSeries& series, const ExtractionConfig& cfg) {
  const auto windows = segment_days(series, cfg);
  const std::size_t n = series.samples.size();
  if (n < 3) {
    std::vector<DiurnalFeature> out;
    for (const auto& w : windows) out.push_back(DiurnalFeature{w.day_index});
    return out;
  }
  const LightSeries sm =
      smooth(series, std::min<int>(cfg.smooth_window, static_cast<int>(n % 2 ? n : n - 1)));
  const auto& s = sm.samples;
  const auto d = derivative(sm);

  std::vector<double> ranges(windows.size(), 0.0);
  std::vector<double> observed;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (windows[k].quality == DayQuality::missing) continue;
    double lo = s[windows[k].begin].value, hi = lo;
    for (std::size_t i = windows[k].begin; i < windows[k].end; ++i) {
      lo = std::min(lo, s[i].value);
      hi = std::max(hi, s[i].value);
    }
    ranges[k] = hi - lo;
    observed.push_back(hi - lo);
  }
  const double typical_range = detail::quantile(observed, 0.5);

  std::vector<DiurnalFeature> out;
  out.reserve(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& w = windows[k];
    DiurnalFeature f{w.day_index};
    f.quality = w.quality;
    if (w.quality == DayQuality::missing || w.end - w.begin < 3) {
      f.quality = DayQuality::missing;
      out.push_back(f);
      continue;
    }
    double lo = s[w.begin].value;
    for (std::size_t i = w.begin; i < w.end; ++i) lo = std::min(lo, s[i].value);
    const double level = cfg.threshold_mode == ThresholdMode::absolute
                             ? cfg.threshold_value
                             : lo + cfg.threshold_value * ranges[k];

    int rises = 0;
    std::size_t first_up = 0, last_down = 0;
    bool have_up = false, have_down = false;
    for (std::size_t i = w.begin + 1; i < w.end; ++i) {
      if (s[i - 1].value < level && s[i].value >= level) {
        ++rises;
        if (!have_up) first_up = i;
        have_up = true;
      }
      if (s[i - 1].value >= level && s[i].value < level) {
        last_down = i;
        have_down = true;
      }
    }
    std::size_t up = w.begin, down = w.begin;
    for (std::size_t i = w.begin; i < w.end; ++i) {
      if (d[i].value > d[up].value) up = i;
      if (d[i].value < d[down].value) down = i;
    }
    if (!have_up || !have_down || last_down <= first_up) {
      f.quality = DayQuality::missing;
      out.push_back(f);
      continue;
    }
    f.sunrise_lts = detail::crossing(s[first_up - 1], s[first_up], level);
    f.sunset_lts = detail::crossing(s[last_down - 1], s[last_down], level);
    f.noon_lts = 0.5 * (detail::refine_extremum(d, up, w.begin, w.end, 1.0) + detail::refine_extremum(d, down, w.begin, w.end, -1.0));
    f.lod_lt = f.sunset_lts - f.sunrise_lts;

    const bool ordered = up < down && f.sunrise_lts < f.noon_lts && f.noon_lts < f.sunset_lts;
    const bool plausible = f.lod_lt >= cfg.min_lod && f.lod_lt <= cfg.max_lod;
    const bool contrast = ranges[k] >= cfg.min_relative_range * typical_range;
    if (!ordered || !plausible || !contrast || rises > 1) f.quality = DayQuality::suspect;
    out.push_back(f);
  }
  return out;
}

}  // namespace tsrecon

namespace tsrecon {

/// Light channel of a segment; records without the channel are skipped.
inline LightSeries light_series_of(const Segment& segment, const std::string& channel = "light") {
  LightSeries out;
  out.sampling_interval = segment.sampling_interval;
  for (const auto& r : segment.records) {
    const auto it = r.channels.find(channel);
    if (it != r.channels.end()) out.samples.push_back({r.lts, std::max(0.0, it->second)});
  }
  if (!(out.sampling_interval > 0.0)) out.sampling_interval = median_spacing(segment.records);
  return out;
}

}  // namespace tsrecon
