#pragma once

// Synthetic deployments with known clock truth, and the evaluation metrics
// used to score reconstructions against that truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tsrecon/calendar.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/light_features.hpp"
#include "tsrecon/random.hpp"
#include "tsrecon/rgtr.hpp"
#include "tsrecon/solar_model.hpp"
#include "tsrecon/sundial_align.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

struct SyntheticSpec {
  GeoLocation location{39.3, -76.6};
  GlobalTimestamp start = 1167609600.0;  // 2007-01-01T00:00:00Z
  double duration_days = 300.0;
  double alpha_true = 1.0001;
  double sampling_interval = 1200.0;
  std::vector<GlobalTimestamp> reboots;
  std::string node_id = "node1";

  double light_scale = 1000.0;
  double cloud_prob = 0.3;
  double cloud_attenuation = 0.7;
  double sensor_noise_sigma = 5.0;
  double lod_bias = -1800.0;  ///< light window = [sunrise - bias/2, sunset + bias/2]
  Zenith zenith{};
  std::vector<int> storm_days;  ///< day offsets whose afternoon goes dark

  int anchor_count = 30;
  double anchor_noise_sigma = 2.0;
  double anchor_corrupt_frac = 0.0;
  double anchor_corrupt_offset = 36000.0;

  int rain_events = 0;            ///< major events, each above rain_min_cm
  double rain_min_cm = 4.5;
  double rain_max_cm = 12.0;
  double minor_rain_prob = 0.0;   ///< per-day chance of a sub-threshold shower
  double moisture_base = 0.15;
  double moisture_gain = 0.02;    ///< moisture units per cm of rain
  double moisture_decay_days = 4.0;
  double moisture_noise_sigma = 0.0;
};

inline void validate(const SyntheticSpec& s) {
  validate(s.location);
  validate(s.zenith);
  auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(s.duration_days >= 1.0)) throw Error("synthetic spec: duration must be at least one day");
  if (!(s.alpha_true >= 0.9 && s.alpha_true <= 1.1)) throw Error("synthetic spec: alpha_true outside [0.9, 1.1]");
  if (!(s.sampling_interval > 0.0)) throw Error("synthetic spec: sampling interval must be positive");
  if (!unit(s.cloud_prob) || !unit(s.cloud_attenuation) || !unit(s.anchor_corrupt_frac) || !unit(s.minor_rain_prob))
    throw Error("synthetic spec: probabilities must lie in [0, 1]");
  if (s.anchor_count < 0 || s.rain_events < 0) throw Error("synthetic spec: counts must be non-negative");
  if (s.sensor_noise_sigma < 0.0 || s.anchor_noise_sigma < 0.0 || s.moisture_noise_sigma < 0.0)
    throw Error("synthetic spec: noise levels must be non-negative");
  if (static_cast<double>(s.rain_events) > s.duration_days) throw Error("synthetic spec: more rain events than days");
  const double end = s.start + s.duration_days * kSecondsPerDay;
  for (double r : s.reboots)
    if (!(r > s.start && r < end)) throw Error("synthetic spec: reboot outside the deployment window");
}

struct TruthSegment {
  std::string node_id;
  int segment_index = 0;
  LinearFit fit;
  GlobalTimestamp end = 0.0;  ///< global time at which the segment stops
};

struct AnchorRecord {
  std::string node_id;
  int segment_index = 0;
  AnchorPoint point;
  bool corrupted = false;
};

struct RainRecord {
  GlobalTimestamp gts = 0.0;
  double ppt_cm = 0.0;
};

struct Deployment {
  std::vector<RawRecord> records;
  std::vector<TruthSegment> truth;
  std::vector<AnchorRecord> anchors;
  std::vector<RainRecord> rain;
  std::uint64_t seed = 0;
};

namespace detail {

struct DayWeather {
  bool cloudy = false;
  double cloud_depth = 0.0;
  bool storm = false;
};

/// Clear-sky light: the elevation term cos(zenith) - cos(zenith_0) over the
/// sunrise-sunset hour-angle range, time-warped so that it is positive exactly
/// on [sunrise - bias/2, sunset + bias/2].
inline double clear_sky(const SolarDay& day, const GeoLocation& loc, double zenith_deg, double bias, double t) {
  const double half = 0.5 * (day.lod + bias);
  if (!(half > 0.0)) return 0.0;
  const double x = (t - day.noon) / half;
  if (std::abs(x) >= 1.0) return 0.0;
  const double hour_angle = x * (day.lod / 2.0 / 240.0) * kDeg;
  const double g = year_angle(tsrecon::day_of_year(day.date), local_noon_hour(loc));
  const double dec = declination_deg(g) * kDeg;
  const double lat = loc.latitude * kDeg;
  const double value = std::sin(lat) * std::sin(dec) + std::cos(lat) * std::cos(dec) * std::cos(hour_angle) -
                       std::cos(zenith_deg * kDeg);
  return std::max(0.0, value);
}

}  // namespace detail

/// Builds a deterministic synthetic deployment for (spec, seed). Local clocks
/// tick at the nominal sampling interval; global time follows the true fit of
/// the segment. Reboots start a new segment with lts reset to zero.
inline Deployment generate_deployment(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  Deployment dep;
  dep.seed = seed;
  const double end = spec.start + spec.duration_days * kSecondsPerDay;

  std::vector<double> bounds{spec.start};
  std::vector<double> reboots = spec.reboots;
  std::sort(reboots.begin(), reboots.end());
  bounds.insert(bounds.end(), reboots.begin(), reboots.end());
  bounds.push_back(end);
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k)
    dep.truth.push_back({spec.node_id, static_cast<int>(k), LinearFit{spec.alpha_true, bounds[k]}, bounds[k + 1]});

  // Weather per calendar day, drawn in date order.
  const auto first_day = static_cast<std::int64_t>(std::floor(spec.start / kSecondsPerDay)) - 1;
  const auto last_day = static_cast<std::int64_t>(std::floor(end / kSecondsPerDay)) + 1;
  const auto start_day = static_cast<std::int64_t>(std::floor(spec.start / kSecondsPerDay));
  std::map<std::int64_t, detail::DayWeather> weather;
  std::map<std::int64_t, SolarDay> solar;
  for (auto d = first_day; d <= last_day; ++d) {
    detail::DayWeather w;
    w.cloudy = rng.bernoulli(spec.cloud_prob);
    w.cloud_depth = rng.uniform(0.5, 1.0);
    w.storm = std::find(spec.storm_days.begin(), spec.storm_days.end(), static_cast<int>(d - start_day)) !=
              spec.storm_days.end();
    weather[d] = w;
    solar[d] = solar_day(spec.location, date_from_epoch_day(d), spec.zenith);
  }

  // Rain: distinct event days inside the deployment, then optional showers.
  const auto n_days = static_cast<std::int64_t>(std::floor(spec.duration_days));
  std::vector<std::int64_t> candidates(static_cast<std::size_t>(n_days));
  std::iota(candidates.begin(), candidates.end(), 0);
  for (int k = 0; k < spec.rain_events; ++k) {
    const auto pick = rng.uniform_int(k, static_cast<std::int64_t>(candidates.size()) - 1);
    std::swap(candidates[static_cast<std::size_t>(k)], candidates[static_cast<std::size_t>(pick)]);
    const double t = spec.start + (static_cast<double>(candidates[static_cast<std::size_t>(k)]) + rng.uniform()) *
                                      kSecondsPerDay;
    dep.rain.push_back({std::min(t, end - 1.0), rng.uniform(spec.rain_min_cm, spec.rain_max_cm)});
  }
  if (spec.minor_rain_prob > 0.0) {
    for (std::int64_t k = 0; k < n_days; ++k) {
      if (!rng.bernoulli(spec.minor_rain_prob)) continue;
      const double t = spec.start + (static_cast<double>(k) + rng.uniform()) * kSecondsPerDay;
      dep.rain.push_back({t, rng.uniform(0.2, 0.5 * spec.rain_min_cm)});
    }
  }
  std::sort(dep.rain.begin(), dep.rain.end(), [](const RainRecord& a, const RainRecord& b) { return a.gts < b.gts; });
  const double tau = spec.moisture_decay_days * kSecondsPerDay;
  auto moisture = [&](double t) {
    double m = spec.moisture_base;
    for (const auto& r : dep.rain) {
      if (r.gts > t) break;
      m += spec.moisture_gain * r.ppt_cm * std::exp(-(t - r.gts) / tau);
    }
    return m;
  };

  auto light = [&](double t) {
    const auto d = static_cast<std::int64_t>(std::floor(t / kSecondsPerDay));
    const SolarDay* best = nullptr;
    std::int64_t best_day = d;
    for (auto k = d - 1; k <= d + 1; ++k) {
      const auto it = solar.find(k);
      if (it == solar.end()) continue;
      if (!best || std::abs(t - it->second.noon) < std::abs(t - best->noon)) {
        best = &it->second;
        best_day = k;
      }
    }
    if (!best) return 0.0;
    double v = spec.light_scale * detail::clear_sky(*best, spec.location, spec.zenith.degrees, spec.lod_bias, t);
    const auto& w = weather[best_day];
    if (w.cloudy) v *= (1.0 - spec.cloud_attenuation * w.cloud_depth) * std::max(0.0, 1.0 + 0.15 * rng.normal());
    if (w.storm && t > best->noon + 3600.0) v *= 0.02;
    return v;
  };

  for (const auto& seg : dep.truth) {
    for (std::int64_t k = 0;; ++k) {
      const double lts = static_cast<double>(k) * spec.sampling_interval;
      const double gts = apply_fit(seg.fit, lts);
      if (gts >= seg.end) break;
      MeasurementRecord rec;
      rec.lts = lts;
      rec.channels["light"] = std::max(0.0, light(gts) + rng.normal(0.0, spec.sensor_noise_sigma));
      if (spec.rain_events > 0 || spec.minor_rain_prob > 0.0)
        rec.channels["soil_moisture"] = moisture(gts) + rng.normal(0.0, spec.moisture_noise_sigma);
      dep.records.push_back(RawRecord{spec.node_id, seg.segment_index, std::move(rec)});
    }
  }

  // Anchors: uniform in global time, exactly round(frac * count) of them corrupted.
  std::vector<double> times;
  for (int k = 0; k < spec.anchor_count; ++k) times.push_back(rng.uniform(spec.start, end));
  std::sort(times.begin(), times.end());
  const int corrupt = static_cast<int>(std::lround(spec.anchor_corrupt_frac * spec.anchor_count));
  std::vector<int> order(static_cast<std::size_t>(spec.anchor_count));
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> is_corrupt(order.size(), false);
  for (int k = 0; k < corrupt; ++k) {
    const auto pick = rng.uniform_int(k, spec.anchor_count - 1);
    std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick)]);
    is_corrupt[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  }
  for (int k = 0; k < spec.anchor_count; ++k) {
    const double t = times[static_cast<std::size_t>(k)];
    const auto seg = std::upper_bound(bounds.begin(), bounds.end(), t) - bounds.begin() - 1;
    const auto& truth = dep.truth[static_cast<std::size_t>(seg)];
    AnchorRecord a{spec.node_id, truth.segment_index, {invert_fit(truth.fit, t), t}, is_corrupt[static_cast<std::size_t>(k)]};
    a.point.gts += rng.normal(0.0, spec.anchor_noise_sigma);
    if (a.corrupted) a.point.gts += spec.anchor_corrupt_offset;
    dep.anchors.push_back(a);
  }
  return dep;
}

// ---------------------------------------------------------------------------
// Metrics

struct EvalReport {
  int day_error = 0;
  double rmse_min = 0.0;
  double ppm_error = 0.0;
  double rho_max = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of empty sample");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace detail

/// Whole-day part of the reconstruction error: the median residual in days, rounded.
inline int day_error(const LinearFit& estimate, const LinearFit& truth, std::span<const double> sample_lts) {
  if (sample_lts.empty()) throw Error("day_error: no samples");
  std::vector<double> days;
  days.reserve(sample_lts.size());
  for (double t : sample_lts) days.push_back((apply_fit(estimate, t) - apply_fit(truth, t)) / kSecondsPerDay);
  return static_cast<int>(std::lround(detail::median(std::move(days))));
}

/// RMS of the within-day residual, in minutes, after removing day_error whole days.
inline double rmse_minutes(const LinearFit& estimate, const LinearFit& truth, std::span<const double> sample_lts) {
  const int days = day_error(estimate, truth, sample_lts);
  double sum = 0.0;
  for (double t : sample_lts) {
    const double r = (apply_fit(estimate, t) - apply_fit(truth, t) - days * kSecondsPerDay) / 60.0;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(sample_lts.size()));
}

inline double ppm_error(double alpha_estimate, double alpha_truth) {
  if (!(alpha_truth > 0.0)) throw Error("ppm_error: true rate must be positive");
  return std::abs(alpha_estimate - alpha_truth) / alpha_truth * 1e6;
}

inline EvalReport evaluate(const LinearFit& estimate, const LinearFit& truth, std::span<const double> sample_lts,
                           double rho_max = 0.0) {
  return EvalReport{day_error(estimate, truth, sample_lts), rmse_minutes(estimate, truth, sample_lts),
                    ppm_error(estimate.alpha, truth.alpha), rho_max};
}

// ---------------------------------------------------------------------------
// Experiments

struct SundialOptions {
  ExtractionConfig extraction{};
  AlignmentConfig alignment{};
  RgtrConfig rgtr{};
  Zenith zenith{};
  double model_pad_min_days = 60.0;  ///< model range extends a random pad beyond the truth window
  double model_pad_max_days = 180.0;
};

/// Solar model covering [first_gts - pad_before, last_gts + pad_after] days.
inline std::vector<SolarDay> padded_model(const GeoLocation& loc, double first_gts, double last_gts,
                                          double pad_before, double pad_after, Zenith zenith = {}) {
  const Date from = date_of(first_gts - pad_before * kSecondsPerDay);
  const Date to = date_of(last_gts + pad_after * kSecondsPerDay);
  return model_series(loc, from, to, zenith);
}

/// Runs Sundial on one synthetic segment (no anchors) and scores it against truth.
inline EvalReport evaluate_sundial(const Segment& segment, const LinearFit& truth, const GeoLocation& loc,
                                   const SundialOptions& options, Rng& rng) {
  if (segment.records.empty()) throw Error("evaluate_sundial: empty segment");
  const double first = apply_fit(truth, segment.records.front().lts);
  const double last = apply_fit(truth, segment.records.back().lts);
  const double pad_before = rng.uniform(options.model_pad_min_days, options.model_pad_max_days);
  const double pad_after = rng.uniform(options.model_pad_min_days, options.model_pad_max_days);
  const auto solar = padded_model(loc, first, last, pad_before, pad_after, options.zenith);
  const auto result =
      sundial_fit(light_series_of(segment), solar, options.extraction, options.alignment, options.rgtr);
  std::vector<double> lts;
  lts.reserve(segment.records.size());
  for (const auto& r : segment.records) lts.push_back(r.lts);
  return evaluate(result.fit, truth, lts, result.rho_max);
}

/// Cuts [start_day, start_day + length_days) out of a segment, re-zeroing the
/// local clock; returns the cut and its true fit.
inline std::pair<Segment, LinearFit> truncate_segment(const Segment& segment, const LinearFit& truth, double start_day,
                                                      double length_days) {
  const double from = truth.beta + start_day * kSecondsPerDay;
  const double to = from + length_days * kSecondsPerDay;
  Segment out{segment.node_id, 0, segment.reboot_counter, {}, segment.sampling_interval};
  double lts0 = 0.0;
  for (const auto& r : segment.records) {
    const double g = apply_fit(truth, r.lts);
    if (g < from || g >= to) continue;
    if (out.records.empty()) lts0 = r.lts;
    MeasurementRecord rec = r;
    rec.lts -= lts0;
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) throw Error("truncate_segment: window holds no records");
  return {std::move(out), LinearFit{truth.alpha, apply_fit(truth, lts0)}};
}

struct TrialOutcome {
  double length_days = 0.0;
  int trial = 0;
  bool ok = false;
  EvalReport report;
  std::string error;
};

struct SweepRow {
  double length_days = 0.0;
  double mean_abs_day_error = 0.0;
  double mean_rmse_min = 0.0;
  double day_error_variance = 0.0;  ///< sample variance of the signed day error
  double mean_ppm_error = 0.0;
  int failures = 0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<TrialOutcome> trials;
};

/// For every trial one deployment is generated from (seed, trial); each
/// length then cuts a window at a uniformly random start and runs Sundial.
inline SweepTable segment_length_sweep(const SyntheticSpec& spec, std::span<const double> lengths, int trials,
                                       std::uint64_t seed, const SundialOptions& options = {}) {
  SyntheticSpec base = spec;
  base.reboots.clear();
  base.anchor_count = 0;
  for (double len : lengths)
    if (!(len >= 1.0 && len <= base.duration_days)) throw Error("sweep: segment length exceeds deployment duration");
  SweepTable table;
  for (int trial = 0; trial < trials; ++trial) {
    const auto trial_seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
    const Deployment dep = generate_deployment(base, trial_seed);
    const auto segments = split_segments(dep.records);
    const Segment& full = segments.front();
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      Rng rng(derive_seed(trial_seed, li + 1));
      const double start = std::floor(rng.uniform(0.0, base.duration_days - lengths[li] + 1.0));
      TrialOutcome outcome;
      outcome.length_days = lengths[li];
      outcome.trial = trial;
      try {
        const auto [cut, truth] = truncate_segment(full, dep.truth.front().fit, start, lengths[li]);
        outcome.report = evaluate_sundial(cut, truth, base.location, options, rng);
        outcome.ok = true;
      } catch (const Error& e) {
        outcome.error = e.what();
      }
      table.trials.push_back(outcome);
    }
  }
  for (double len : lengths) {
    SweepRow row{len};
    std::vector<double> days;
    for (const auto& t : table.trials) {
      if (t.length_days != len) continue;
      if (!t.ok) {
        ++row.failures;
        continue;
      }
      days.push_back(t.report.day_error);
      row.mean_abs_day_error += std::abs(t.report.day_error);
      row.mean_rmse_min += t.report.rmse_min;
      row.mean_ppm_error += t.report.ppm_error;
    }
    if (!days.empty()) {
      const double n = static_cast<double>(days.size());
      row.mean_abs_day_error /= n;
      row.mean_rmse_min /= n;
      row.mean_ppm_error /= n;
      const double mean = std::accumulate(days.begin(), days.end(), 0.0) / n;
      if (days.size() > 1) {
        for (double d : days) row.day_error_variance += (d - mean) * (d - mean);
        row.day_error_variance /= n - 1.0;
      }
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace tsrecon
