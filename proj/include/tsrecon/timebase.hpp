#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsrecon/error.hpp"

namespace tsrecon {

/// Seconds since segment start on the mote's own clock.
using LocalTimestamp = double;
/// Seconds since the Unix epoch, UTC.
using GlobalTimestamp = double;

/// A (local, global) timestamp pair tying a mote clock to reference time.
struct AnchorPoint {
  LocalTimestamp lts = 0.0;
  GlobalTimestamp gts = 0.0;

  friend auto operator<=>(const AnchorPoint&, const AnchorPoint&) = default;
};

inline void validate(const AnchorPoint& a) {
  if (!std::isfinite(a.lts) || !std::isfinite(a.gts)) throw Error("anchor point is not finite");
  if (a.lts < 0.0) throw Error("anchor point has negative local timestamp");
}

/// Plausibility window on the clock rate.
struct AlphaBounds {
  double min = 0.9;
  double max = 1.1;
};

/// gts = alpha * lts + beta for one segment.
struct LinearFit {
  double alpha = 1.0;
  GlobalTimestamp beta = 0.0;

  friend bool operator==(const LinearFit&, const LinearFit&) = default;
};

inline void validate(const LinearFit& fit, AlphaBounds bounds = {}) {
  if (!std::isfinite(fit.alpha) || !std::isfinite(fit.beta)) throw Error("clock fit is not finite");
  if (fit.alpha < bounds.min || fit.alpha > bounds.max)
    throw Error("clock rate " + std::to_string(fit.alpha) + " outside sanity bounds [" +
                std::to_string(bounds.min) + ", " + std::to_string(bounds.max) + "]");
}

inline GlobalTimestamp apply_fit(const LinearFit& fit, LocalTimestamp lts) {
  return fit.alpha * lts + fit.beta;
}

inline LocalTimestamp invert_fit(const LinearFit& fit, GlobalTimestamp gts) {
  if (fit.alpha == 0.0) throw Error("cannot invert a clock fit with zero rate");
  return (gts - fit.beta) / fit.alpha;
}

struct MeasurementRecord {
  LocalTimestamp lts = 0.0;
  std::map<std::string, double> channels;

  friend bool operator==(const MeasurementRecord&, const MeasurementRecord&) = default;
};

/// One row of a measurement file before segmentation.
struct RawRecord {
  std::string node_id;
  std::optional<std::int64_t> reboot_counter;
  MeasurementRecord record;
};

/// A maximal run of strictly increasing local timestamps for one node.
struct Segment {
  std::string node_id;
  int segment_index = 0;
  std::optional<std::int64_t> reboot_counter;
  std::vector<MeasurementRecord> records;
  double sampling_interval = 0.0;  ///< median spacing; 0 with fewer than two records

  friend bool operator==(const Segment&, const Segment&) = default;
};

inline double median_spacing(std::span<const MeasurementRecord> records) {
  if (records.size() < 2) return 0.0;
  std::vector<double> gaps;
  gaps.reserve(records.size() - 1);
  for (std::size_t i = 1; i < records.size(); ++i) gaps.push_back(records[i].lts - records[i - 1].lts);
  auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  return *mid;
}

/// Splits per-node record streams into segments. A segment ends where the
/// local clock goes backwards or the reboot counter changes. When every
/// record of a node carries a reboot counter the segments are numbered in
/// counter order, otherwise in file order. Output is sorted by
/// (node_id, segment_index).
inline std::vector<Segment> split_segments(std::span<const RawRecord> rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RawRecord*>> per_node;
  for (const auto& row : rows) {
    auto [it, inserted] = per_node.try_emplace(row.node_id);
    if (inserted) order.push_back(row.node_id);
    it->second.push_back(&row);
  }

  std::vector<Segment> out;
  for (const auto& node : order) {
    const auto& list = per_node[node];
    const bool counted = std::all_of(list.begin(), list.end(),
                                     [](const RawRecord* r) { return r->reboot_counter.has_value(); });
    std::vector<Segment> runs;
    for (const RawRecord* row : list) {
      const auto& rec = row->record;
      if (!std::isfinite(rec.lts) || rec.lts < 0.0)
        throw Error("node " + node + ": invalid local timestamp " + std::to_string(rec.lts));
      const auto counter = counted ? row->reboot_counter : std::nullopt;
      bool fresh = runs.empty();
      if (!fresh) {
        const auto& prev = runs.back();
        if (rec.lts < prev.records.back().lts || counter != prev.reboot_counter) fresh = true;
        else if (rec.lts == prev.records.back().lts)
          throw Error("node " + node + ": duplicate local timestamp " + std::to_string(rec.lts) +
                      " within a segment");
      }
      if (fresh) {
        runs.push_back(Segment{node, 0, counter, {}, 0.0});
      }
      runs.back().records.push_back(rec);
    }
    if (counted)
      std::stable_sort(runs.begin(), runs.end(),
                       [](const Segment& a, const Segment& b) { return *a.reboot_counter < *b.reboot_counter; });
    for (std::size_t i = 0; i < runs.size(); ++i) {
      runs[i].segment_index = static_cast<int>(i);
      runs[i].sampling_interval = median_spacing(runs[i].records);
    }
    std::move(runs.begin(), runs.end(), std::back_inserter(out));
  }
  std::stable_sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
    return a.node_id != b.node_id ? a.node_id < b.node_id : a.segment_index < b.segment_index;
  });
  return out;
}

}  // namespace tsrecon
