// tsrecon: command-line front end for timestamp reconstruction.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include "tsrecon/config.hpp"
#include "tsrecon/day_correction.hpp"
#include "tsrecon/harness.hpp"
#include "tsrecon/io.hpp"
#include "tsrecon/light_features.hpp"
#include "tsrecon/pipeline.hpp"
#include "tsrecon/rgtr.hpp"
#include "tsrecon/solar_model.hpp"
#include "tsrecon/sundial_align.hpp"
#include "tsrecon/timebase.hpp"

namespace fs = std::filesystem;
using namespace tsrecon;
using io::json;

namespace {

// Exit codes
constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;

void flatten(const YAML::Node& node, const std::string& prefix, Settings& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.IsSequence()) {
    std::string joined;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].IsScalar()) throw ConfigError(prefix + ": only lists of scalars are supported");
      joined += (i ? "," : "") + node[i].as<std::string>();
    }
    out.set(prefix, joined);
  } else if (node.IsScalar()) {
    out.set(prefix, node.as<std::string>());
  } else if (node.IsNull() && !prefix.empty()) {
    out.set(prefix, "");
  }
}

void load_config_file(const fs::path& path, Settings& out) {
  try {
    flatten(YAML::LoadFile(path.string()), "", out);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Layers config file, named flags and --set overrides, in that order.
struct Layers {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::pair<std::string, std::function<std::optional<std::string>()>>> flags;

  void add_common(CLI::App* app) {
    app->add_option("--config", config, "YAML configuration file");
    app->add_option("--set", overrides, "Override a configuration key (key=value)");
  }

  template <class T>
  void flag(CLI::App* app, const std::string& name, const std::string& key, std::optional<T>& slot,
            const std::string& help) {
    app->add_option(name, slot, help + " [" + key + "]");
    flags.emplace_back(key, [&slot]() -> std::optional<std::string> {
      if (!slot) return std::nullopt;
      std::ostringstream s;
      s.precision(17);
      s << *slot;
      return s.str();
    });
  }

  Settings build() const {
    Settings s;
    if (!config.empty()) load_config_file(config, s);
    for (const auto& [key, get] : flags)
      if (auto v = get()) s.set(key, *v);
    for (const auto& o : overrides) s.assign(o);
    return s;
  }
};

/// Reads every known key so typos are caught whichever subcommand runs.
struct Everything {
  PipelineConfig pipeline;
  SyntheticSpec synth;
  std::vector<double> lengths{60.0, 150.0, 300.0};
  int trials = 20;
  std::string seed;

  explicit Everything(Settings& s) {
    apply(s, pipeline);
    apply(s, synth);
    s.read("sweep.lengths", lengths);
    s.read("sweep.trials", trials);
    s.read("seed", seed);
    s.reject_unused();
  }
};

std::uint64_t seed_of(const Everything& e) {
  if (e.seed.empty()) return 0;
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(e.seed, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != e.seed.size() || e.seed.front() == '-') throw ConfigError("seed must be a non-negative integer");
  return v;
}

/// Writes to the named file (atomically) or to stdout when the name is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::atomic_write(path, text);
  }
}

Segment pick_segment(const fs::path& input, const std::string& node, int index) {
  const auto table = io::parse_measurements(input);
  for (auto& seg : split_segments(table.records))
    if (seg.node_id == node && seg.segment_index == index) return seg;
  throw ConfigError("no segment " + node + "/" + std::to_string(index) + " in " + input.string());
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timestamp reconstruction for long-term sensor deployments"};
  app.require_subcommand(1);

  // Options shared by several subcommands. Each subcommand registers its own copies.
  std::map<std::string, Layers> layers;
  std::string input, anchors_path, out, fit_path, truth_path, moisture_path, rain_path, node, channel,
      correlogram_path;
  int segment = 0;
  std::optional<double> lat, lon, zenith, q, delta_high, delta_low, delta_dec, threshold, ppt_threshold,
      sm_threshold;
  std::optional<std::uint64_t> seed;
  std::optional<int> window, trials, smooth;
  std::optional<std::string> model_from, model_to, lengths;

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    layers[name].add_common(s);
    return s;
  };

  // solar
  CLI::App* solar = sub("solar", "Model LOD and solar noon per day");
  layers["solar"].flag(solar, "--lat", "location.lat", lat, "Latitude, degrees north");
  layers["solar"].flag(solar, "--lon", "location.lon", lon, "Longitude, degrees east");
  layers["solar"].flag(solar, "--from", "model.from", model_from, "First date YYYY-MM-DD");
  layers["solar"].flag(solar, "--to", "model.to", model_to, "Last date YYYY-MM-DD");
  layers["solar"].flag(solar, "--zenith", "model.zenith", zenith, "Sunrise zenith angle, degrees");
  solar->add_option("--out,-o", out, "Output CSV (default stdout)");

  // segments
  CLI::App* segments = sub("segments", "Split measurements into monotone segments");
  segments->add_option("--input,-i", input, "Measurement CSV")->required();
  segments->add_option("--out,-o", out, "Output CSV (default stdout)");

  // extract
  CLI::App* extract = sub("extract", "Per-day sunrise, sunset, noon and LOD in local time");
  extract->add_option("--input,-i", input, "Measurement CSV")->required();
  extract->add_option("--node", node, "Node id")->required();
  extract->add_option("--segment", segment, "Segment index");
  extract->add_option("--channel", channel, "Light column (default: input.light_channel)");
  layers["extract"].flag(extract, "--smooth", "extract.smooth_window", smooth, "Moving-average window, samples");
  extract->add_option("--out,-o", out, "Output CSV (default stdout)");

  // fit
  CLI::App* fit = sub("fit", "Robust clock fit from anchor points");
  fit->add_option("--anchors,-a", anchors_path, "Anchor CSV")->required();
  layers["fit"].flag(fit, "--q", "rgtr.q", q, "Intercept bin width, seconds");
  layers["fit"].flag(fit, "--delta-high", "rgtr.delta_high", delta_high, "First censoring threshold, seconds");
  layers["fit"].flag(fit, "--delta-low", "rgtr.delta_low", delta_low, "Last censoring threshold, seconds");
  layers["fit"].flag(fit, "--delta-dec", "rgtr.delta_dec", delta_dec, "Threshold step, seconds");
  fit->add_option("--out,-o", out, "Output JSON-lines (default stdout)");

  // sundial
  CLI::App* sundial = sub("sundial", "Clock fit from the light sensor alone");
  sundial->add_option("--input,-i", input, "Measurement CSV")->required();
  sundial->add_option("--node", node, "Node id")->required();
  sundial->add_option("--segment", segment, "Segment index");
  layers["sundial"].flag(sundial, "--lat", "location.lat", lat, "Latitude, degrees north");
  layers["sundial"].flag(sundial, "--lon", "location.lon", lon, "Longitude, degrees east");
  layers["sundial"].flag(sundial, "--model-from", "model.from", model_from, "First model date");
  layers["sundial"].flag(sundial, "--model-to", "model.to", model_to, "Last model date");
  layers["sundial"].flag(sundial, "--threshold", "sundial.lod_outlier_threshold", threshold,
                         "LOD outlier threshold, seconds");
  layers["sundial"].flag(sundial, "--zenith", "model.zenith", zenith, "Sunrise zenith angle, degrees");
  sundial->add_option("--correlogram", correlogram_path, "Also write the correlogram CSV here");
  sundial->add_option("--out,-o", out, "Output JSON (default stdout)");

  // daycorrect
  CLI::App* daycorrect = sub("daycorrect", "Correct a fit's day offset from soil moisture and rainfall");
  daycorrect->add_option("--fit,-f", fit_path, "Fit JSON")->required();
  daycorrect->add_option("--moisture,-m", moisture_path, "Moisture CSV (measurements or lts/gts + value)")->required();
  daycorrect->add_option("--rain,-r", rain_path, "Rainfall CSV gts_epoch_seconds,ppt_cm")->required();
  daycorrect->add_option("--channel", channel, "Moisture column (default: input.moisture_channel)");
  layers["daycorrect"].flag(daycorrect, "--window", "daycorrect.window", window, "Search +/- this many days");
  layers["daycorrect"].flag(daycorrect, "--ppt-threshold", "daycorrect.ppt_threshold", ppt_threshold,
                            "Rain event threshold, cm");
  layers["daycorrect"].flag(daycorrect, "--sm-threshold", "daycorrect.sm_threshold", sm_threshold,
                            "Moisture threshold");
  daycorrect->add_option("--out,-o", out, "Output JSON (default stdout)");

  // reconstruct
  CLI::App* reconstruct = sub("reconstruct", "Full pipeline: fit every segment and rewrite timestamps");
  std::string r_input, r_anchors, r_rain, r_out;
  reconstruct->add_option("--input,-i", r_input, "Measurement CSV [input.measurements]");
  reconstruct->add_option("--anchors,-a", r_anchors, "Anchor CSV [input.anchors]");
  reconstruct->add_option("--rain,-r", r_rain, "Rainfall CSV [input.rain]");
  reconstruct->add_option("--out,-o", r_out, "Output directory [output.dir]");
  layers["reconstruct"].flag(reconstruct, "--lat", "location.lat", lat, "Latitude, degrees north");
  layers["reconstruct"].flag(reconstruct, "--lon", "location.lon", lon, "Longitude, degrees east");
  layers["reconstruct"].flag(reconstruct, "--model-from", "model.from", model_from, "First model date");
  layers["reconstruct"].flag(reconstruct, "--model-to", "model.to", model_to, "Last model date");

  // synth
  CLI::App* synth = sub("synth", "Generate a synthetic deployment with known truth");
  std::string spec_path;
  synth->add_option("--spec", spec_path, "YAML synthetic spec (synth.* keys)");
  layers["synth"].flag(synth, "--seed", "seed", seed, "Random seed");
  synth->add_option("--out,-o", out, "Output directory")->required();

  // eval
  CLI::App* eval = sub("eval", "Score fits against synthetic truth");
  eval->add_option("--fit,-f", fit_path, "Fit JSON / JSON-lines")->required();
  eval->add_option("--truth,-t", truth_path, "truth.json from synth")->required();
  eval->add_option("--input,-i", input, "Measurement CSV")->required();
  eval->add_option("--out,-o", out, "Output JSON-lines (default stdout)");

  // sweep
  CLI::App* sweep = sub("sweep", "Segment-length sweep of the light-only fit");
  sweep->add_option("--spec", spec_path, "YAML synthetic spec (synth.* keys)");
  layers["sweep"].flag(sweep, "--lengths", "sweep.lengths", lengths, "Comma-separated lengths, days");
  layers["sweep"].flag(sweep, "--trials", "sweep.trials", trials, "Trials per length");
  layers["sweep"].flag(sweep, "--seed", "seed", seed, "Random seed");
  sweep->add_option("--out,-o", out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    const std::string name = active->get_name();
    Layers& layer = layers[name];
    if (!spec_path.empty()) {
      if (!layer.config.empty()) throw ConfigError("use either --spec or --config");
      layer.config = spec_path;
    }
    Settings settings = layer.build();
    if (!r_input.empty()) settings.set("input.measurements", r_input);
    if (!r_anchors.empty()) settings.set("input.anchors", r_anchors);
    if (!r_rain.empty()) settings.set("input.rain", r_rain);
    if (!r_out.empty()) settings.set("output.dir", r_out);
    const Everything all(settings);
    const PipelineConfig& cfg = all.pipeline;

    if (name == "solar") {
      require(settings.has("location.lat") && settings.has("location.lon"), "solar: need --lat and --lon");
      require(cfg.model_from.has_value() && cfg.model_to.has_value(), "solar: need --from and --to");
      validate(cfg.location);
      validate(cfg.zenith);
      std::ostringstream s;
      s << "date,lod_seconds,noon_epoch,sunrise_epoch,sunset_epoch\n";
      for (const auto& d : model_series(cfg.location, *cfg.model_from, *cfg.model_to, cfg.zenith))
        s << format_date(d.date) << ',' << io::fixed(d.lod) << ',' << io::fixed(d.noon) << ',' << io::fixed(d.sunrise)
          << ',' << io::fixed(d.sunset) << '\n';
      emit(out, s.str());
      return kOk;
    }

    if (name == "segments") {
      const auto table = io::parse_measurements(input);
      const auto segs = split_segments(table.records);
      std::ostringstream s;
      s << "node_id,segment_index,reboot_counter,records,first_lts,last_lts,sampling_interval\n";
      for (const auto& g : segs)
        s << g.node_id << ',' << g.segment_index << ',' << (g.reboot_counter ? std::to_string(*g.reboot_counter) : "")
          << ',' << g.records.size() << ',' << io::fixed(g.records.front().lts) << ','
          << io::fixed(g.records.back().lts) << ',' << io::fixed(g.sampling_interval) << '\n';
      emit(out, s.str());
      std::cerr << table.rows << " rows, " << segs.size() << " segments\n";
      return kOk;
    }

    if (name == "extract") {
      validate(cfg.extraction);
      const Segment seg = pick_segment(input, node, segment);
      const auto features =
          extract_features(light_series_of(seg, channel.empty() ? cfg.light_channel : channel), cfg.extraction);
      std::ostringstream s;
      s << "day_index,sunrise_lts,sunset_lts,noon_lts,lod_seconds,quality\n";
      auto cell = [](double v) { return std::isfinite(v) ? io::fixed(v) : std::string(); };
      for (const auto& f : features)
        s << f.day_index << ',' << cell(f.sunrise_lts) << ',' << cell(f.sunset_lts) << ',' << cell(f.noon_lts) << ','
          << cell(f.lod_lt) << ',' << to_string(f.quality) << '\n';
      emit(out, s.str());
      return kOk;
    }

    if (name == "fit") {
      validate(cfg.rgtr);
      const auto rows = io::parse_anchors(anchors_path);
      std::map<std::pair<std::string, int>, std::vector<AnchorPoint>> groups;
      for (const auto& a : rows) groups[{a.node_id, a.segment_index}].push_back(a.point);
      std::ostringstream s;
      int failures = 0;
      for (const auto& [key, pts] : groups) {
        json j{{"node_id", key.first}, {"segment_index", key.second}, {"anchors", pts.size()}};
        try {
          const auto r = clock_fit(pts, cfg.rgtr);
          json censored = json::array();
          for (const auto& p : detail::canonical(pts))
            if (!r.used.count(p)) censored.push_back({p.lts, p.gts});
          j.update({{"status", "ok"},
                    {"alpha", r.fit.alpha},
                    {"beta", r.fit.beta},
                    {"used", r.used.size()},
                    {"censored", censored.size()},
                    {"bin_key", r.bin_key},
                    {"iterations", r.iterations},
                    {"censored_anchors", censored}});
        } catch (const Error& e) {
          ++failures;
          j.update({{"status", "failed"}, {"error", e.what()}});
        }
        s << j.dump() << '\n';
      }
      emit(out, s.str());
      if (groups.empty()) throw ConfigError(anchors_path + ": no anchors");
      return failures == 0 ? kOk : (failures == static_cast<int>(groups.size()) ? kConfigError : kPartial);
    }

    if (name == "sundial") {
      require(settings.has("location.lat") && settings.has("location.lon"), "sundial: need --lat and --lon");
      require(cfg.model_from.has_value() && cfg.model_to.has_value(), "sundial: need --model-from and --model-to");
      validate(cfg.location);
      validate(cfg.alignment);
      validate(cfg.extraction);
      validate(cfg.rgtr);
      const Segment seg = pick_segment(input, node, segment);
      const auto solar_days = model_series(cfg.location, *cfg.model_from, *cfg.model_to, cfg.zenith);
      const auto r =
          sundial_fit(light_series_of(seg, cfg.light_channel), solar_days, cfg.extraction, cfg.alignment, cfg.rgtr);
      const json j{{"node_id", seg.node_id},
                   {"segment_index", seg.segment_index},
                   {"alpha", r.fit.alpha},
                   {"beta", r.fit.beta},
                   {"lag", r.lag},
                   {"rho_max", r.rho_max},
                   {"outlier_days", r.outlier_days},
                   {"anchor_count", r.anchors.size()},
                   {"anchors_used", r.rgtr.used.size()},
                   {"iterations", r.iterations},
                   {"model_from", format_date(*cfg.model_from)}};
      emit(out, j.dump() + "\n");
      if (!correlogram_path.empty()) {
        std::ostringstream c;
        c << "lag,rho\n";
        for (const auto& p : r.correlogram) c << p.lag << ',' << io::exact(p.rho) << '\n';
        io::atomic_write(correlogram_path, c.str());
      }
      return kOk;
    }

    if (name == "daycorrect") {
      validate(cfg.day_correction);
      const auto fits = io::read_json_file(fit_path);
      if (fits.empty()) throw ConfigError(fit_path + ": no fit record");
      const io::FitRecord rec = io::fit_from_json(fits.front());
      std::vector<TimedValue> sm;
      const auto header = io::read_csv_file(moisture_path);
      const std::string col = channel.empty() ? cfg.moisture_channel : channel;
      if (header.column("node_id") && header.column("lts_seconds")) {
        const auto table = io::parse_measurements(moisture_path);
        bool found = false;
        for (const auto& seg : split_segments(table.records)) {
          if (seg.node_id != rec.node_id || seg.segment_index != rec.segment_index) continue;
          found = true;
          for (const auto& r : seg.records)
            if (auto it = r.channels.find(col); it != r.channels.end())
              sm.push_back({apply_fit(rec.fit, r.lts), it->second});
        }
        if (!found) throw ConfigError(moisture_path + ": no segment matching the fit record");
      } else {
        auto in = io::open_input(moisture_path);
        sm = io::parse_timed_values(in, moisture_path, header.column(col) ? col : std::string(), rec.fit);
      }
      if (sm.empty()) throw ConfigError(moisture_path + ": no moisture values");
      auto rin = io::open_input(rain_path);
      const auto rain = io::parse_timed_values(rin, rain_path, "ppt_cm");
      if (rain.empty()) throw ConfigError(rain_path + ": no rainfall rows");
      const auto sm_vec = daily_event_vector(sm, cfg.day_correction.sm_threshold, cfg.day_correction.sm_aggregation);
      const auto ppt_vec = daily_event_vector(rain, cfg.day_correction.ppt_threshold, Aggregation::total);
      if (!sm_vec.has_events()) throw Error("moisture series has no events above the threshold");
      if (!ppt_vec.has_events()) throw Error("rainfall series has no events above the threshold");
      const DayShift shift = best_day_shift(sm_vec, ppt_vec, cfg.day_correction);
      const LinearFit corrected = apply_day_shift(rec.fit, shift.lag);
      json table = json::array();
      for (const auto& [lag, theta] : shift.table) table.push_back({{"lag", lag}, {"theta", theta ? json(*theta) : json(nullptr)}});
      const json j{{"node_id", rec.node_id}, {"segment_index", rec.segment_index}, {"alpha", corrected.alpha},
                   {"beta", corrected.beta},  {"lag", shift.lag},                   {"theta", shift.theta},
                   {"table", table}};
      emit(out, j.dump() + "\n");
      return kOk;
    }

    if (name == "reconstruct") {
      PipelineResult result;
      const int code = run_pipeline(cfg, &result);
      for (const auto& r : result.reports)
        if (!r.ok) std::cerr << "segment " << r.node_id << "/" << r.segment_index << " failed: " << r.error << '\n';
      std::cerr << result.reports.size() << " segments, output in " << cfg.output_dir.string() << '\n';
      return code;
    }

    if (name == "synth") {
      validate(all.synth);
      const Deployment dep = generate_deployment(all.synth, seed_of(all));
      const fs::path dir = out;
      std::ostringstream m, a, r;
      io::write_measurements(m, dep.records);
      io::write_anchors(a, dep.anchors);
      io::atomic_write(dir / "measurements.csv", m.str());
      io::atomic_write(dir / "anchors.csv", a.str());
      io::atomic_write(dir / "truth.json", io::truth_to_json(dep, all.synth).dump(2) + "\n");
      if (!dep.rain.empty()) {
        io::write_rain(r, dep.rain);
        io::atomic_write(dir / "rain.csv", r.str());
      }
      std::cerr << dep.records.size() << " records, " << dep.truth.size() << " segments, " << dep.anchors.size()
                << " anchors\n";
      return kOk;
    }

    if (name == "eval") {
      const auto truth_docs = io::read_json_file(truth_path);
      if (truth_docs.size() != 1) throw ConfigError(truth_path + ": expected one JSON document");
      const auto truth = io::truth_from_json(truth_docs.front());
      const auto table = io::parse_measurements(input);
      const auto segs = split_segments(table.records);
      std::ostringstream s;
      int failures = 0;
      for (const auto& f : io::read_json_file(fit_path)) {
        if (f.value("status", std::string("ok")) != "ok") continue;
        const io::FitRecord est = io::fit_from_json(f);
        json j{{"node_id", est.node_id}, {"segment_index", est.segment_index}};
        const auto t = std::find_if(truth.begin(), truth.end(), [&](const io::FitRecord& x) {
          return x.node_id == est.node_id && x.segment_index == est.segment_index;
        });
        const auto g = std::find_if(segs.begin(), segs.end(), [&](const Segment& x) {
          return x.node_id == est.node_id && x.segment_index == est.segment_index;
        });
        if (t == truth.end() || g == segs.end()) {
          ++failures;
          j["error"] = "no matching truth or measurement segment";
        } else {
          std::vector<double> lts;
          for (const auto& rec : g->records) lts.push_back(rec.lts);
          const auto rep = evaluate(est.fit, t->fit, lts, f.value("rho_max", 0.0));
          j.update({{"day_error", rep.day_error},
                    {"rmse_min", rep.rmse_min},
                    {"ppm_error", rep.ppm_error},
                    {"rho_max", rep.rho_max}});
        }
        s << j.dump() << '\n';
      }
      emit(out, s.str());
      return failures == 0 ? kOk : kPartial;
    }

    if (name == "sweep") {
      validate(all.synth);
      require(all.trials >= 1, "sweep: trials must be at least 1");
      SundialOptions options;
      options.extraction = cfg.extraction;
      options.alignment = cfg.alignment;
      options.rgtr = cfg.rgtr;
      options.zenith = all.synth.zenith;
      const auto t = segment_length_sweep(all.synth, all.lengths, all.trials, seed_of(all), options);
      std::ostringstream s;
      s << "length_days,mean_abs_day_error,mean_rmse_min,day_error_variance,mean_ppm_error,failures\n";
      for (const auto& row : t.rows)
        s << io::exact(row.length_days) << ',' << io::fixed(row.mean_abs_day_error, 4) << ','
          << io::fixed(row.mean_rmse_min, 4) << ',' << io::fixed(row.day_error_variance, 4) << ','
          << io::fixed(row.mean_ppm_error, 4) << ',' << row.failures << '\n';
      emit(out, s.str());
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
