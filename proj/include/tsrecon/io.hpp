#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tsrecon/calendar.hpp"
#include "tsrecon/day_correction.hpp"
#include "tsrecon/error.hpp"
#include "tsrecon/harness.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
  std::size_t require(std::string_view name) const {
    const auto c = column(name);
    if (!c) throw Error(source + ": missing required column '" + std::string(name) + "'");
    return *c;
  }
};

/// Splits one line; double quotes group cells and "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Reads a headered CSV. Blank lines and lines starting with '#' are skipped.
inline CsvTable read_csv(std::istream& in, std::string source) {
  CsvTable t;
  t.source = std::move(source);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split_csv_line(s);
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      t.header = std::move(cells);
      std::set<std::string> seen;
      for (const auto& h : t.header) {
        if (h.empty()) throw Error(t.source + ":" + std::to_string(n) + ": empty column name");
        if (!seen.insert(h).second) throw Error(t.source + ":" + std::to_string(n) + ": duplicate column '" + h + "'");
      }
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(t.source + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                  " cells, found " + std::to_string(cells.size()));
    t.rows.push_back({n, std::move(cells)});
  }
  if (t.header.empty()) throw Error(t.source + ": empty file (no header)");
  return t;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return in;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_csv(in, path.string());
}

inline double parse_number(const CsvTable& t, const CsvRow& row, std::size_t col) {
  const std::string& s = row.cells[col];
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v))
    throw Error(t.source + ":" + std::to_string(row.line) + ": column '" + t.header[col] + "' is not a number: '" +
                s + "'");
  return v;
}

inline std::int64_t parse_integer(const CsvTable& t, const CsvRow& row, std::size_t col) {
  const double v = parse_number(t, row, col);
  if (v != std::floor(v))
    throw Error(t.source + ":" + std::to_string(row.line) + ": column '" + t.header[col] + "' is not an integer");
  return static_cast<std::int64_t>(v);
}

/// Fixed-point text with the given number of decimals.
inline std::string fixed(double v, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[64];
  for (int p = 6; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Measurements

inline constexpr std::string_view kNodeColumn = "node_id";
inline constexpr std::string_view kRebootColumn = "reboot_counter";
inline constexpr std::string_view kLtsColumn = "lts_seconds";

struct MeasurementTable {
  std::vector<RawRecord> records;
  std::vector<std::string> channels;  ///< modality columns in file order
  std::size_t rows = 0;
};

/// Header: node_id,[reboot_counter,]lts_seconds,<modality...>. Empty cells are
/// missing channel values; an empty reboot_counter cell is an unknown counter.
inline MeasurementTable parse_measurements(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  const std::size_t node = t.require(kNodeColumn);
  const std::size_t lts = t.require(kLtsColumn);
  const auto reboot = t.column(kRebootColumn);
  MeasurementTable out;
  std::vector<std::size_t> modal;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == node || i == lts || (reboot && i == *reboot)) continue;
    modal.push_back(i);
    out.channels.push_back(t.header[i]);
  }
  out.records.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    RawRecord r;
    r.node_id = row.cells[node];
    if (r.node_id.empty()) throw Error(t.source + ":" + std::to_string(row.line) + ": empty node_id");
    if (reboot && !row.cells[*reboot].empty()) r.reboot_counter = parse_integer(t, row, *reboot);
    r.record.lts = parse_number(t, row, lts);
    for (std::size_t i : modal)
      if (!row.cells[i].empty()) r.record.channels[t.header[i]] = parse_number(t, row, i);
    out.records.push_back(std::move(r));
  }
  out.rows = t.rows.size();
  return out;
}

inline MeasurementTable parse_measurements(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_measurements(in, path.string());
}

inline void write_measurements(std::ostream& out, std::span<const RawRecord> records) {
  std::set<std::string> names;
  bool counters = false;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.record.channels) names.insert(k);
    counters = counters || r.reboot_counter.has_value();
  }
  out << kNodeColumn;
  if (counters) out << ',' << kRebootColumn;
  out << ',' << kLtsColumn;
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << r.node_id;
    if (counters) out << ',' << (r.reboot_counter ? std::to_string(*r.reboot_counter) : std::string());
    out << ',' << fixed(r.record.lts);
    for (const auto& n : names) {
      out << ',';
      const auto it = r.record.channels.find(n);
      if (it != r.record.channels.end()) out << fixed(it->second, 4);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Anchors

struct AnchorRow {
  std::string node_id;
  int segment_index = 0;
  AnchorPoint point;
};

/// Header: node_id,segment_index,lts_seconds,gts_epoch_seconds. The global
/// column takes epoch seconds or ISO-8601 UTC.
inline std::vector<AnchorRow> parse_anchors(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  const std::size_t node = t.require("node_id");
  const std::size_t seg = t.require("segment_index");
  const std::size_t lts = t.require("lts_seconds");
  const std::size_t gts = t.require("gts_epoch_seconds");
  std::vector<AnchorRow> out;
  for (const auto& row : t.rows) {
    AnchorRow a;
    a.node_id = row.cells[node];
    a.segment_index = static_cast<int>(parse_integer(t, row, seg));
    a.point.lts = parse_number(t, row, lts);
    try {
      a.point.gts = parse_timestamp(row.cells[gts]);
    } catch (const Error& e) {
      throw Error(t.source + ":" + std::to_string(row.line) + ": " + e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<AnchorRow> parse_anchors(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_anchors(in, path.string());
}

inline void write_anchors(std::ostream& out, std::span<const AnchorRecord> anchors) {
  out << "node_id,segment_index,lts_seconds,gts_epoch_seconds\n";
  for (const auto& a : anchors)
    out << a.node_id << ',' << a.segment_index << ',' << fixed(a.point.lts) << ',' << fixed(a.point.gts) << '\n';
}

// ---------------------------------------------------------------------------
// Timed value series (rainfall, moisture)

/// Reads `gts_epoch_seconds,<value>` or, given a fit, `lts_seconds,<value>`.
/// value_column empty: the only column besides the time column(s).
inline std::vector<TimedValue> parse_timed_values(std::istream& in, const std::string& source,
                                                  std::string value_column = {},
                                                  const std::optional<LinearFit>& fit = std::nullopt) {
  const CsvTable t = read_csv(in, source);
  const auto gts = t.column("gts_epoch_seconds");
  const auto lts = t.column("lts_seconds");
  if (!gts && !(lts && fit))
    throw Error(t.source + ": need a gts_epoch_seconds column (or lts_seconds together with a fit)");
  std::size_t value = 0;
  if (value_column.empty()) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < t.header.size(); ++i)
      if (t.header[i] != "gts_epoch_seconds" && t.header[i] != "lts_seconds" && t.header[i] != "node_id" &&
          t.header[i] != "segment_index" && t.header[i] != "reboot_counter")
        rest.push_back(i);
    if (rest.size() != 1) throw Error(t.source + ": cannot tell which column holds the values");
    value = rest.front();
  } else {
    value = t.require(value_column);
  }
  std::vector<TimedValue> out;
  for (const auto& row : t.rows) {
    if (row.cells[value].empty()) continue;
    TimedValue v;
    if (gts) {
      try {
        v.gts = parse_timestamp(row.cells[*gts]);
      } catch (const Error& e) {
        throw Error(t.source + ":" + std::to_string(row.line) + ": " + e.what());
      }
    } else {
      v.gts = apply_fit(*fit, parse_number(t, row, *lts));
    }
    v.value = parse_number(t, row, value);
    out.push_back(v);
  }
  return out;
}

inline void write_rain(std::ostream& out, std::span<const RainRecord> rain) {
  out << "gts_epoch_seconds,ppt_cm\n";
  for (const auto& r : rain) out << fixed(r.gts) << ',' << fixed(r.ppt_cm, 4) << '\n';
}

// ---------------------------------------------------------------------------
// JSON

/// Parses one JSON object per non-blank line.
inline std::vector<json> read_json_lines(std::istream& in, const std::string& source) {
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// A whole-file JSON document, or JSON-lines if the file holds several objects.
inline std::vector<json> read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    json doc = json::parse(text);
    if (doc.is_array()) return doc.get<std::vector<json>>();
    return {doc};
  } catch (const json::exception&) {
    std::istringstream lines(text);
    return read_json_lines(lines, path.string());
  }
}

/// Writes through a temporary sibling and renames it into place.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

/// Fit record as emitted by `fit`, `sundial`, `daycorrect`.
struct FitRecord {
  std::string node_id;
  int segment_index = 0;
  LinearFit fit;
};

inline FitRecord fit_from_json(const json& j) {
  if (!j.contains("alpha") || !j.contains("beta")) throw Error("fit record needs alpha and beta");
  FitRecord r;
  r.node_id = j.value("node_id", std::string());
  r.segment_index = j.value("segment_index", 0);
  r.fit = {j.at("alpha").get<double>(), j.at("beta").get<double>()};
  return r;
}

inline json truth_to_json(const Deployment& dep, const SyntheticSpec& spec) {
  json segs = json::array();
  for (const auto& t : dep.truth)
    segs.push_back({{"node_id", t.node_id},
                    {"segment_index", t.segment_index},
                    {"alpha", t.fit.alpha},
                    {"beta", t.fit.beta},
                    {"end_epoch", t.end}});
  return {{"rng", Rng::kAlgorithm},
          {"seed", dep.seed},
          {"latitude", spec.location.latitude},
          {"longitude", spec.location.longitude},
          {"start_epoch", spec.start},
          {"duration_days", spec.duration_days},
          {"sampling_interval", spec.sampling_interval},
          {"segments", segs}};
}

inline std::vector<FitRecord> truth_from_json(const json& j) {
  std::vector<FitRecord> out;
  for (const auto& s : j.at("segments")) out.push_back(fit_from_json(s));
  return out;
}

}  // namespace tsrecon::io
