#pragma once

// Day alignment of extracted length-of-day against the solar model, noon
// anchor generation and the fit / censor / realign loop.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tsrecon/calendar.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/light_features.hpp"
#include "tsrecon/rgtr.hpp"
#include "tsrecon/solar_model.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

/// Per-day values indexed by day number; empty optionals are gaps.
using DailySeries = std::vector<std::optional<double>>;

struct AlignmentConfig {
  std::optional<int> lag_min;  ///< unset: lags keeping every observed day inside the model
  std::optional<int> lag_max;
  int min_overlap = 30;
  double lod_outlier_threshold = 1800.0;
  int max_iterations = 10;
  std::optional<int> fixed_lag;  ///< skip the lag search and use this lag
  double noon_delta_high = 1200.0;
  double noon_delta_low = 300.0;  ///< last censoring rung for noon anchors
};

inline void validate(const AlignmentConfig& cfg) {
  if (cfg.lag_min && cfg.lag_max && *cfg.lag_min > *cfg.lag_max) throw Error("alignment: lag_min exceeds lag_max");
  if (cfg.min_overlap < 14) throw Error("alignment: min_overlap must be at least 14 days");
  if (cfg.max_iterations < 1) throw Error("alignment: max_iterations must be at least 1");
  if (!(cfg.lod_outlier_threshold > 0.0)) throw Error("alignment: lod_outlier_threshold must be positive");
  if (!(cfg.noon_delta_low > 0.0) || !(cfg.noon_delta_high > cfg.noon_delta_low))
    throw Error("alignment: need 0 < noon_delta_low < noon_delta_high");
}

struct CorrelogramPoint {
  int lag = 0;
  double rho = 0.0;
};

struct LagChoice {
  int lag = 0;
  double rho = 0.0;
  std::vector<CorrelogramPoint> correlogram;
};

struct AlignmentResult {
  int lag = 0;
  double rho_max = 0.0;
  LinearFit fit;
  std::vector<AnchorPoint> anchors;
  std::set<int> outlier_days;
  int iterations = 0;
  std::vector<CorrelogramPoint> correlogram;
  std::vector<DiurnalFeature> features;
  RgtrResult rgtr;
  std::size_t days_outside_model = 0;
};

/// Pearson correlation of lod_lt[i] against lod_gt[i + lag] over the days
/// where both exist. Undefined below `min_overlap` shared days or when either
/// side is constant.
inline std::optional<double> lod_correlation(const DailySeries& lod_lt, std::span<const double> lod_gt, int lag,
                                             int min_overlap) {
  double sx = 0.0, sy = 0.0;
  int count = 0;
  const int n_lt = static_cast<int>(lod_lt.size());
  const int n_gt = static_cast<int>(lod_gt.size());
  const int first = std::max(0, -lag);
  const int last = std::min(n_lt, n_gt - lag);
  for (int i = first; i < last; ++i) {
    if (!lod_lt[static_cast<std::size_t>(i)]) continue;
    sx += *lod_lt[static_cast<std::size_t>(i)];
    sy += lod_gt[static_cast<std::size_t>(i + lag)];
    ++count;
  }
  if (count < min_overlap || count < 2) return std::nullopt;
  const double mx = sx / count, my = sy / count;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = first; i < last; ++i) {
    if (!lod_lt[static_cast<std::size_t>(i)]) continue;
    const double dx = *lod_lt[static_cast<std::size_t>(i)] - mx;
    const double dy = lod_gt[static_cast<std::size_t>(i + lag)] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Lag in [lag_min, lag_max] with the highest correlation; ties go to the smaller lag.
inline LagChoice best_lag(const DailySeries& lod_lt, std::span<const double> lod_gt, const AlignmentConfig& cfg) {
  validate(cfg);
  // Default window: every lag that keeps all observed days inside the model.
  // If the observations outlast the model, fall back to any lag meeting min_overlap.
  int first_day = -1, last_day = -1;
  for (std::size_t i = 0; i < lod_lt.size(); ++i)
    if (lod_lt[i]) {
      if (first_day < 0) first_day = static_cast<int>(i);
      last_day = static_cast<int>(i);
    }
  int lo = -first_day;
  int hi = static_cast<int>(lod_gt.size()) - 1 - last_day;
  if (first_day < 0 || hi < lo) {
    lo = -static_cast<int>(lod_lt.size()) + 1;
    hi = static_cast<int>(lod_gt.size()) - 1;
  }
  if (cfg.lag_min) lo = *cfg.lag_min;
  if (cfg.lag_max) hi = *cfg.lag_max;
  LagChoice choice;
  bool found = false;
  for (int lag = lo; lag <= hi; ++lag) {
    const auto rho = lod_correlation(lod_lt, lod_gt, lag, cfg.min_overlap);
    if (!rho) continue;
    choice.correlogram.push_back({lag, *rho});
    if (!found || *rho > choice.rho) {
      choice.lag = lag;
      choice.rho = *rho;
      found = true;
    }
  }
  if (!found)
    throw Error("alignment: no lag in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] overlaps " +
                std::to_string(cfg.min_overlap) + " days of the model");
  return choice;
}

/// Length-of-day per day index from ok, non-excluded features.
inline DailySeries lod_series(std::span<const DiurnalFeature> features, const std::set<int>& excluded = {}) {
  int last = -1;
  for (const auto& f : features) last = std::max(last, f.day_index);
  DailySeries out(static_cast<std::size_t>(last + 1));
  for (const auto& f : features)
    if (f.quality == DayQuality::ok && !excluded.contains(f.day_index))
      out[static_cast<std::size_t>(f.day_index)] = f.lod_lt;
  return out;
}

inline std::vector<double> model_lod(std::span<const SolarDay> solar) {
  std::vector<double> v;
  v.reserve(solar.size());
  for (const auto& d : solar) v.push_back(d.lod);
  return v;
}

struct NoonAnchors {
  std::vector<AnchorPoint> anchors;
  std::vector<int> days;  ///< day index of each anchor
  std::size_t skipped = 0;  ///< ok days falling outside the model range
};

/// One anchor per ok, non-excluded day: (local noon, model noon of day + lag).
inline NoonAnchors noon_anchors(std::span<const DiurnalFeature> features, int lag, std::span<const SolarDay> solar,
                                const std::set<int>& excluded = {}) {
  NoonAnchors out;
  for (const auto& f : features) {
    if (f.quality != DayQuality::ok || excluded.contains(f.day_index)) continue;
    const long j = static_cast<long>(f.day_index) + lag;
    if (j < 0 || j >= static_cast<long>(solar.size())) {
      ++out.skipped;
      continue;
    }
    out.anchors.push_back({f.noon_lts, solar[static_cast<std::size_t>(j)].noon});
    out.days.push_back(f.day_index);
  }
  return out;
}

namespace detail {

/// Days whose length-of-day, mapped to global time by `fit`, departs from the
/// model by more than `threshold` after removing an affine calibration (the
/// part of the mismatch a correlation cannot see: horizon offset and the
/// seasonal bias of threshold detection).
inline std::set<int> lod_outliers(std::span<const DiurnalFeature> features, const LinearFit& fit,
                                  std::span<const SolarDay> solar, double threshold, const std::set<int>& known) {
  if (solar.empty()) return {};
  const double model_start = midnight_epoch(solar.front().date);
  struct Day {
    int index;
    double model;
    double estimate;
  };
  std::vector<Day> days;
  for (const auto& f : features) {
    if (f.quality != DayQuality::ok) continue;
    const double noon_gt = apply_fit(fit, f.noon_lts);
    const auto j = static_cast<long>(std::floor((noon_gt - model_start) / kSecondsPerDay));
    if (j < 0 || j >= static_cast<long>(solar.size())) continue;
    days.push_back({f.day_index, solar[static_cast<std::size_t>(j)].lod, fit.alpha * f.lod_lt});
  }

  std::set<int> flagged = known;
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<const Day*> keep;
    for (const auto& d : days)
      if (!flagged.contains(d.index)) keep.push_back(&d);
    if (keep.size() < 3) break;
    double mx = 0.0, my = 0.0;
    for (const auto* d : keep) {
      mx += d->model;
      my += d->estimate;
    }
    mx /= static_cast<double>(keep.size());
    my /= static_cast<double>(keep.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto* d : keep) {
      sxx += (d->model - mx) * (d->model - mx);
      sxy += (d->model - mx) * (d->estimate - my);
    }
    // A nearly flat model LOD (short window at a solstice) only supports an offset.
    const double slope = sxx > static_cast<double>(keep.size()) * 600.0 * 600.0 ? sxy / sxx : 1.0;
    const double offset = my - slope * mx;
    bool changed = false;
    for (const auto& d : days) {
      if (flagged.contains(d.index)) continue;
      if (std::abs(d.estimate - (slope * d.model + offset)) > threshold) {
        flagged.insert(d.index);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return flagged;
}

}  // namespace detail

/// Full alignment loop: extract features, pick the lag, fit noon anchors with
/// RGTR, flag days whose reconstructed LOD disagrees with the model, realign
/// without them and repeat until the lag stops changing.
inline AlignmentResult sundial_fit(const LightSeries& series, std::span<const SolarDay> solar,
                                   const ExtractionConfig& extraction, const AlignmentConfig& alignment,
                                   const RgtrConfig& rgtr) {
  validate(alignment);
  validate(rgtr);
  if (solar.empty()) throw Error("sundial: empty solar model");
  RgtrConfig noon_cfg = rgtr;
  noon_cfg.delta_high = std::max(rgtr.delta_high, alignment.noon_delta_high);
  noon_cfg.delta_low = std::max(rgtr.delta_low, alignment.noon_delta_low);
  if (!(noon_cfg.delta_high > noon_cfg.delta_low)) noon_cfg.delta_high = 2.0 * noon_cfg.delta_low;

  AlignmentResult result;
  result.features = extract_features(series, extraction);
  const auto gt = model_lod(solar);

  auto choose = [&](const std::set<int>& excluded) {
    const DailySeries lt = lod_series(result.features, excluded);
    if (alignment.fixed_lag) {
      LagChoice c;
      c.lag = *alignment.fixed_lag;
      c.rho = lod_correlation(lt, gt, c.lag, alignment.min_overlap).value_or(std::nan(""));
      c.correlogram.push_back({c.lag, c.rho});
      return c;
    }
    return best_lag(lt, gt, alignment);
  };

  LagChoice choice = choose({});
  const int base_lag = choice.lag;
  int lag = choice.lag;
  const NoonAnchors base = noon_anchors(result.features, base_lag, solar);
  result.days_outside_model = base.skipped;

  // Noon anchors are built once at the first lag; later lag changes shift the
  // global side by whole days.
  auto anchors_for = [&](int current_lag, const std::set<int>& excluded) {
    std::vector<AnchorPoint> out;
    const double shift = static_cast<double>(current_lag - base_lag) * kSecondsPerDay;
    for (std::size_t i = 0; i < base.anchors.size(); ++i)
      if (!excluded.contains(base.days[i])) out.push_back({base.anchors[i].lts, base.anchors[i].gts + shift});
    return out;
  };

  std::set<int> outliers;
  RgtrResult fit_result;
  int iteration = 0;
  auto fit_now = [&] {
    try {
      fit_result = clock_fit(anchors_for(lag, outliers), noon_cfg);
    } catch (const Error& e) {
      throw Error("sundial: clock fit failed at iteration " + std::to_string(iteration) + " (lag " +
                  std::to_string(lag) + ", " + std::to_string(outliers.size()) + " outlier days): " + e.what());
    }
  };
  while (iteration < alignment.max_iterations) {
    ++iteration;
    fit_now();
    outliers = detail::lod_outliers(result.features, fit_result.fit, solar, alignment.lod_outlier_threshold, outliers);
    LagChoice next = choose(outliers);
    choice = next;
    if (next.lag == lag) break;
    lag = next.lag;
  }
  // Final fit without the days flagged in the last pass.
  fit_now();

  result.lag = lag;
  result.rho_max = choice.rho;
  result.correlogram = std::move(choice.correlogram);
  result.fit = fit_result.fit;
  result.anchors = anchors_for(lag, outliers);
  result.outlier_days = std::move(outliers);
  result.iterations = iteration;
  result.rgtr = std::move(fit_result);
  return result;
}

}  // namespace tsrecon
