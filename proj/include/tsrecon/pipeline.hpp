#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsrecon/day_correction.hpp"
#include "tsrecon/io.hpp"
#include "tsrecon/light_features.hpp"
#include "tsrecon/rgtr.hpp"
#include "tsrecon/solar_model.hpp"
#include "tsrecon/sundial_align.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

/// Bad configuration or unusable inputs; maps to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct PipelineConfig {
  GeoLocation location{};
  std::optional<Date> model_from;  ///< solar model range for the Sundial path
  std::optional<Date> model_to;
  Zenith zenith{};
  RgtrConfig rgtr{};
  ExtractionConfig extraction{};
  AlignmentConfig alignment{};
  DayCorrectionConfig day_correction{};
  std::string light_channel = "light";
  std::string moisture_channel = "soil_moisture";
  std::filesystem::path measurements;
  std::optional<std::filesystem::path> anchors;
  std::optional<std::filesystem::path> rain;
  std::filesystem::path output_dir = "out";
};

inline void validate(const PipelineConfig& cfg) {
  try {
    validate(cfg.location);
    validate(cfg.zenith);
    validate(cfg.rgtr);
    validate(cfg.extraction);
    validate(cfg.alignment);
    validate(cfg.day_correction);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.model_from.has_value() != cfg.model_to.has_value())
    throw ConfigError("model range needs both model.from and model.to");
  if (cfg.model_from && *cfg.model_from > *cfg.model_to) throw ConfigError("model.from is after model.to");
  if (cfg.measurements.empty()) throw ConfigError("no measurement file given");
  auto exists = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
  };
  exists(cfg.measurements, "measurement");
  if (cfg.anchors) exists(*cfg.anchors, "anchor");
  if (cfg.rain) exists(*cfg.rain, "rain");
}

enum class FitMethod { rgtr, sundial };

inline const char* to_string(FitMethod m) { return m == FitMethod::rgtr ? "rgtr" : "sundial"; }

struct SegmentReport {
  std::string node_id;
  int segment_index = 0;
  std::size_t records = 0;
  bool ok = false;
  std::string error;
  FitMethod method = FitMethod::sundial;
  std::string fallback;  ///< why the RGTR path was abandoned, if it was
  LinearFit fit;
  std::size_t anchors_used = 0;
  std::size_t anchors_censored = 0;
  std::optional<int> lag;
  std::optional<double> rho_max;
  std::vector<int> outlier_days;
  std::optional<DayShift> day_shift;
};

struct PipelineResult {
  std::vector<SegmentReport> reports;  ///< sorted by (node_id, segment_index)
  std::string reconstruction_csv;
  std::string report_jsonl;
  int exit_code = 0;
};

inline io::json to_json(const SegmentReport& r) {
  io::json j{{"node_id", r.node_id}, {"segment_index", r.segment_index}, {"records", r.records},
             {"status", r.ok ? "ok" : "failed"}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["method"] = to_string(r.method);
  if (!r.fallback.empty()) j["fallback"] = r.fallback;
  j["alpha"] = r.fit.alpha;
  j["beta"] = r.fit.beta;
  j["anchors_used"] = r.anchors_used;
  j["anchors_censored"] = r.anchors_censored;
  if (r.lag) j["lag"] = *r.lag;
  if (r.rho_max) j["rho_max"] = *r.rho_max;
  if (r.method == FitMethod::sundial) j["outlier_days"] = r.outlier_days;
  if (r.day_shift) {
    io::json table = io::json::array();
    for (const auto& [lag, theta] : r.day_shift->table) table.push_back({{"lag", lag}, {"theta", theta ? io::json(*theta) : io::json(nullptr)}});
    j["day_shift"] = {{"lag", r.day_shift->lag}, {"theta", r.day_shift->theta}, {"table", table}};
  }
  return j;
}

namespace detail {

inline std::vector<TimedValue> channel_in_global_time(const Segment& seg, const std::string& channel,
                                                      const LinearFit& fit) {
  std::vector<TimedValue> out;
  for (const auto& r : seg.records) {
    const auto it = r.channels.find(channel);
    if (it != r.channels.end()) out.push_back({apply_fit(fit, r.lts), it->second});
  }
  return out;
}

inline void fit_with_sundial(const Segment& seg, const PipelineConfig& cfg, SegmentReport& rep) {
  if (!cfg.model_from) throw Error("no anchors and no solar model range (model.from/model.to) configured");
  const auto solar = model_series(cfg.location, *cfg.model_from, *cfg.model_to, cfg.zenith);
  const auto result =
      sundial_fit(light_series_of(seg, cfg.light_channel), solar, cfg.extraction, cfg.alignment, cfg.rgtr);
  rep.method = FitMethod::sundial;
  rep.fit = result.fit;
  rep.lag = result.lag;
  rep.rho_max = result.rho_max;
  rep.anchors_used = result.rgtr.used.size();
  rep.anchors_censored = result.rgtr.censored.size();
  rep.outlier_days.assign(result.outlier_days.begin(), result.outlier_days.end());
}

}  // namespace detail

/// Fits one segment: RGTR with two or more anchors, otherwise (or if RGTR
/// fails) Sundial; rain, when given, corrects the day offset of Sundial fits.
inline SegmentReport reconstruct_segment(const Segment& seg, std::span<const AnchorPoint> anchors,
                                         const std::vector<TimedValue>* rain, const PipelineConfig& cfg) {
  SegmentReport rep;
  rep.node_id = seg.node_id;
  rep.segment_index = seg.segment_index;
  rep.records = seg.records.size();
  try {
    bool done = false;
    if (anchors.size() >= 2) {
      try {
        const auto r = clock_fit(anchors, cfg.rgtr);
        rep.method = FitMethod::rgtr;
        rep.fit = r.fit;
        rep.anchors_used = r.used.size();
        rep.anchors_censored = anchors.size() - r.used.size();
        done = true;
      } catch (const Error& e) {
        rep.fallback = e.what();
      }
    }
    if (!done) detail::fit_with_sundial(seg, cfg, rep);
    if (rain && rep.method == FitMethod::sundial) {
      const auto sm = detail::channel_in_global_time(seg, cfg.moisture_channel, rep.fit);
      if (!sm.empty()) {
        const auto sm_vec = daily_event_vector(sm, cfg.day_correction.sm_threshold, cfg.day_correction.sm_aggregation);
        const auto ppt_vec = daily_event_vector(*rain, cfg.day_correction.ppt_threshold, Aggregation::total);
        if (sm_vec.has_events() && ppt_vec.has_events()) {
          rep.day_shift = best_day_shift(sm_vec, ppt_vec, cfg.day_correction);
          rep.fit = apply_day_shift(rep.fit, rep.day_shift->lag);
        }
      }
    }
    rep.ok = true;
  } catch (const Error& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

/// Runs the whole pipeline in memory. Throws ConfigError for configuration
/// problems, unreadable or malformed inputs, and inputs with no segments.
inline PipelineResult run_pipeline_in_memory(const PipelineConfig& cfg) {
  validate(cfg);
  std::vector<Segment> segments;
  std::vector<io::AnchorRow> anchor_rows;
  std::optional<std::vector<TimedValue>> rain;
  try {
    const auto table = io::parse_measurements(cfg.measurements);
    if (table.records.empty()) throw Error(cfg.measurements.string() + ": no measurement rows");
    segments = split_segments(table.records);
    if (cfg.anchors) anchor_rows = io::parse_anchors(*cfg.anchors);
    if (cfg.rain) {
      auto in = io::open_input(*cfg.rain);
      rain = io::parse_timed_values(in, cfg.rain->string(), "ppt_cm");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  std::map<std::pair<std::string, int>, std::vector<AnchorPoint>> by_segment;
  for (const auto& a : anchor_rows) by_segment[{a.node_id, a.segment_index}].push_back(a.point);

  PipelineResult result;
  std::ostringstream csv;
  std::ostringstream report;
  csv << "node_id,segment_index,lts_seconds,gts_epoch_seconds\n";
  std::size_t failed = 0;
  for (const auto& seg : segments) {  // split_segments already orders by (node, index)
    const auto it = by_segment.find({seg.node_id, seg.segment_index});
    const std::span<const AnchorPoint> anchors =
        it == by_segment.end() ? std::span<const AnchorPoint>{} : std::span<const AnchorPoint>(it->second);
    auto rep = reconstruct_segment(seg, anchors, rain ? &*rain : nullptr, cfg);
    if (rep.ok) {
      for (const auto& r : seg.records)
        csv << seg.node_id << ',' << seg.segment_index << ',' << io::fixed(r.lts) << ','
            << io::fixed(apply_fit(rep.fit, r.lts)) << '\n';
    } else {
      ++failed;
    }
    report << to_json(rep).dump() << '\n';
    result.reports.push_back(std::move(rep));
  }
  result.reconstruction_csv = csv.str();
  result.report_jsonl = report.str();
  result.exit_code = failed == 0 ? 0 : (failed == segments.size() ? 1 : 2);
  return result;
}

/// Runs the pipeline and writes reconstruction.csv and report.jsonl into the
/// output directory. Returns the process exit code: 0 all segments fitted,
/// 2 some failed, 1 configuration error or no segment fitted.
inline int run_pipeline(const PipelineConfig& cfg, PipelineResult* out = nullptr) {
  PipelineResult result = run_pipeline_in_memory(cfg);
  io::atomic_write(cfg.output_dir / "reconstruction.csv", result.reconstruction_csv);
  io::atomic_write(cfg.output_dir / "report.jsonl", result.report_jsonl);
  const int code = result.exit_code;
  if (out) *out = std::move(result);
  return code;
}

}  // namespace tsrecon
