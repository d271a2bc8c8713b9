#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsrecon/harness.hpp"
#include "tsrecon/pipeline.hpp"

namespace tsrecon {

/// Flat `section.key -> text` settings. Every read marks the key as used so
/// leftovers can be reported as unknown.
class Settings {
 public:
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Parses `key=value`.
  void assign(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ConfigError("expected key=value, got '" + std::string(text) + "'");
    set(io::trim(text.substr(0, eq)), io::trim(text.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::optional<std::string> raw(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  void read(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void read(const std::string& key, double& out) {
    if (auto v = raw(key)) out = number(key, *v);
  }
  void read(const std::string& key, int& out) {
    if (auto v = raw(key)) out = integer(key, *v);
  }
  void read(const std::string& key, std::optional<int>& out) {
    if (auto v = raw(key)) out = v->empty() ? std::nullopt : std::optional<int>(integer(key, *v));
  }
  void read(const std::string& key, std::optional<Date>& out) {
    if (auto v = raw(key)) {
      try {
        out = parse_date(*v);
      } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
      }
    }
  }
  void read(const std::string& key, std::vector<double>& out) {
    if (auto v = raw(key)) {
      out.clear();
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!io::trim(item).empty()) out.push_back(number(key, io::trim(item)));
    }
  }
  void read_timestamp(const std::string& key, double& out) {
    if (auto v = raw(key)) {
      try {
        out = parse_timestamp(*v);
      } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
      }
    }
  }

  /// Comma-separated epoch seconds or ISO-8601 instants.
  void read_timestamps(const std::string& key, std::vector<double>& out) {
    if (auto v = raw(key)) {
      out.clear();
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (io::trim(item).empty()) continue;
        try {
          out.push_back(parse_timestamp(io::trim(item)));
        } catch (const Error& e) {
          throw ConfigError(key + ": " + e.what());
        }
      }
    }
  }

  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  /// Throws listing every key nobody read.
  void reject_unused() const {
    const auto left = unused();
    if (left.empty()) return;
    std::string msg = "unknown configuration key(s):";
    for (const auto& k : left) msg += " " + k;
    throw ConfigError(msg);
  }

 private:
  static double number(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (v.empty() || used != v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
    return d;
  }
  static int integer(const std::string& key, const std::string& v) {
    const double d = number(key, v);
    if (d != static_cast<double>(static_cast<int>(d))) throw ConfigError(key + ": not an integer: '" + v + "'");
    return static_cast<int>(d);
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

inline void apply(Settings& s, GeoLocation& loc) {
  s.read("location.lat", loc.latitude);
  s.read("location.lon", loc.longitude);
}

inline void apply(Settings& s, Zenith& z) { s.read("model.zenith", z.degrees); }

inline void apply(Settings& s, RgtrConfig& c) {
  s.read("rgtr.q", c.q);
  s.read("rgtr.delta_high", c.delta_high);
  s.read("rgtr.delta_low", c.delta_low);
  s.read("rgtr.delta_dec", c.delta_dec);
  s.read("rgtr.alpha_min", c.alpha_bounds.min);
  s.read("rgtr.alpha_max", c.alpha_bounds.max);
}

inline void apply(Settings& s, ExtractionConfig& c) {
  s.read("extract.smooth_window", c.smooth_window);
  if (auto mode = s.raw("extract.threshold_mode")) {
    if (*mode == "fraction") c.threshold_mode = ThresholdMode::fraction_of_range;
    else if (*mode == "absolute") c.threshold_mode = ThresholdMode::absolute;
    else throw ConfigError("extract.threshold_mode: expected fraction or absolute");
  }
  s.read("extract.threshold", c.threshold_value);
  s.read("extract.min_day_samples", c.min_day_samples);
  s.read("extract.min_lod", c.min_lod);
  s.read("extract.max_lod", c.max_lod);
  s.read("extract.min_dark_run", c.min_dark_run);
  s.read("extract.min_relative_range", c.min_relative_range);
}

inline void apply(Settings& s, AlignmentConfig& c) {
  s.read("sundial.lag_min", c.lag_min);
  s.read("sundial.lag_max", c.lag_max);
  s.read("sundial.min_overlap", c.min_overlap);
  s.read("sundial.lod_outlier_threshold", c.lod_outlier_threshold);
  s.read("sundial.max_iterations", c.max_iterations);
  s.read("sundial.fixed_lag", c.fixed_lag);
  s.read("sundial.noon_delta_high", c.noon_delta_high);
  s.read("sundial.noon_delta_low", c.noon_delta_low);
}

inline void apply(Settings& s, DayCorrectionConfig& c) {
  s.read("daycorrect.sm_threshold", c.sm_threshold);
  s.read("daycorrect.ppt_threshold", c.ppt_threshold);
  s.read("daycorrect.window", c.window);
  if (auto agg = s.raw("daycorrect.sm_aggregation")) {
    if (*agg == "rise") c.sm_aggregation = Aggregation::rise;
    else if (*agg == "total") c.sm_aggregation = Aggregation::total;
    else throw ConfigError("daycorrect.sm_aggregation: expected rise or total");
  }
}

inline void apply(Settings& s, SyntheticSpec& spec) {
  s.read("synth.lat", spec.location.latitude);
  s.read("synth.lon", spec.location.longitude);
  s.read_timestamp("synth.start", spec.start);
  s.read("synth.duration_days", spec.duration_days);
  s.read("synth.alpha", spec.alpha_true);
  s.read("synth.sampling_interval", spec.sampling_interval);
  s.read_timestamps("synth.reboots", spec.reboots);
  s.read("synth.node_id", spec.node_id);
  s.read("synth.light_scale", spec.light_scale);
  s.read("synth.cloud_prob", spec.cloud_prob);
  s.read("synth.cloud_attenuation", spec.cloud_attenuation);
  s.read("synth.sensor_noise_sigma", spec.sensor_noise_sigma);
  s.read("synth.lod_bias", spec.lod_bias);
  s.read("synth.zenith", spec.zenith.degrees);
  if (auto v = s.raw("synth.storm_days")) {
    Settings tmp;
    tmp.set("x", *v);
    std::vector<double> days;
    tmp.read("x", days);
    spec.storm_days.assign(days.begin(), days.end());
  }
  s.read("synth.anchor_count", spec.anchor_count);
  s.read("synth.anchor_noise_sigma", spec.anchor_noise_sigma);
  s.read("synth.anchor_corrupt_frac", spec.anchor_corrupt_frac);
  s.read("synth.anchor_corrupt_offset", spec.anchor_corrupt_offset);
  s.read("synth.rain_events", spec.rain_events);
  s.read("synth.rain_min_cm", spec.rain_min_cm);
  s.read("synth.rain_max_cm", spec.rain_max_cm);
  s.read("synth.minor_rain_prob", spec.minor_rain_prob);
  s.read("synth.moisture_base", spec.moisture_base);
  s.read("synth.moisture_gain", spec.moisture_gain);
  s.read("synth.moisture_decay_days", spec.moisture_decay_days);
  s.read("synth.moisture_noise_sigma", spec.moisture_noise_sigma);
}

inline void apply(Settings& s, PipelineConfig& cfg) {
  apply(s, cfg.location);
  apply(s, cfg.zenith);
  s.read("model.from", cfg.model_from);
  s.read("model.to", cfg.model_to);
  apply(s, cfg.rgtr);
  apply(s, cfg.extraction);
  apply(s, cfg.alignment);
  apply(s, cfg.day_correction);
  s.read("input.light_channel", cfg.light_channel);
  s.read("input.moisture_channel", cfg.moisture_channel);
  if (auto v = s.raw("input.measurements")) cfg.measurements = *v;
  if (auto v = s.raw("input.anchors")) cfg.anchors = v->empty() ? std::nullopt : std::optional<std::filesystem::path>(*v);
  if (auto v = s.raw("input.rain")) cfg.rain = v->empty() ? std::nullopt : std::optional<std::filesystem::path>(*v);
  if (auto v = s.raw("output.dir")) cfg.output_dir = *v;
}

}  // namespace tsrecon
