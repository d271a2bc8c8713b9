#pragma once

// Robust global timestamp reconstruction: Hough grouping of anchor points by
// quantized intercept, then a least-squares fit with a descending residual
// threshold that censors outlying anchors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tsrecon/error.hpp"
#include "tsrecon/timebase.hpp"

namespace tsrecon {

struct RgtrConfig {
  double q = 3600.0;            ///< intercept bin width, seconds
  double delta_high = 86400.0;  ///< first censoring threshold, seconds
  double delta_low = 10.0;      ///< ladder stops once the threshold reaches this
  double delta_dec = 10.0;      ///< threshold decrement per rung
  AlphaBounds alpha_bounds{};
};

inline void validate(const RgtrConfig& cfg) {
  if (!(cfg.q > 0.0)) throw Error("rgtr: Q must be positive");
  if (!(cfg.delta_low > 0.0 && cfg.delta_high > cfg.delta_low))
    throw Error("rgtr: require delta_high > delta_low > 0");
  if (!(cfg.delta_dec > 0.0)) throw Error("rgtr: delta_dec must be positive");
  if (!(cfg.alpha_bounds.min < cfg.alpha_bounds.max)) throw Error("rgtr: alpha_min must be below alpha_max");
}

/// One refit of the censoring loop.
struct CensorStep {
  double delta = 0.0;
  LinearFit fit_before;
  std::vector<AnchorPoint> censored;
};

struct RgtrResult {
  LinearFit fit;
  std::set<AnchorPoint> used;
  std::set<AnchorPoint> censored;
  std::int64_t bin_key = 0;
  int iterations = 0;
  std::vector<CensorStep> trace;
};

/// Raised when the censoring loop leaves fewer than two anchors.
class RgtrError : public Error {
 public:
  RgtrError(const std::string& what, std::vector<CensorStep> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<CensorStep>& trace() const { return trace_; }

 private:
  std::vector<CensorStep> trace_;
};

using HoughBins = std::map<std::int64_t, std::set<AnchorPoint>>;

namespace detail {

inline std::vector<AnchorPoint> canonical(std::span<const AnchorPoint> anchors) {
  std::vector<AnchorPoint> pts(anchors.begin(), anchors.end());
  for (const auto& a : pts) validate(a);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Votes every anchor pair whose slope is a plausible clock rate into the bin
/// round(beta / Q) of the line through the pair; both anchors join that bin.
inline HoughBins hough_quantize(std::span<const AnchorPoint> anchors, const RgtrConfig& cfg) {
  validate(cfg);
  const auto pts = detail::canonical(anchors);
  if (pts.size() < 2) throw Error("rgtr: need at least two distinct anchor points");
  HoughBins bins;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const auto& a = pts[i];
      const auto& b = pts[j];
      if (a.lts == b.lts) continue;
      const double alpha = (b.gts - a.gts) / (b.lts - a.lts);
      if (alpha < cfg.alpha_bounds.min || alpha > cfg.alpha_bounds.max) continue;
      const double beta = b.gts - alpha * b.lts;
      auto& bin = bins[std::llround(beta / cfg.q)];
      bin.insert(a);
      bin.insert(b);
    }
  }
  return bins;
}

/// Ordinary least squares of gts on lts (mean-centred for conditioning at epoch scale).
inline LinearFit llse(std::span<const AnchorPoint> anchors) {
  if (anchors.size() < 2) throw Error("llse: need at least two anchor points");
  const double n = static_cast<double>(anchors.size());
  double mean_l = 0.0, mean_g = 0.0;
  for (const auto& a : anchors) {
    mean_l += a.lts;
    mean_g += a.gts;
  }
  mean_l /= n;
  mean_g /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& a : anchors) {
    const double dx = a.lts - mean_l;
    sxx += dx * dx;
    sxy += dx * (a.gts - mean_g);
  }
  if (!(sxx > 0.0)) throw Error("llse: degenerate anchors (all local timestamps equal)");
  const double alpha = sxy / sxx;
  return LinearFit{alpha, mean_g - alpha * mean_l};
}

/// Iterative fit: starting at delta_high the threshold walks down by
/// delta_dec; at each rung anchors with |residual| >= threshold are censored
/// and the survivors refit. Rungs that would censor nothing leave the fit
/// unchanged and are skipped without refitting. The ladder ends once the
/// threshold reaches delta_low.
inline RgtrResult compute_alpha_beta(std::span<const AnchorPoint> anchors, const RgtrConfig& cfg) {
  validate(cfg);
  const auto pts = detail::canonical(anchors);
  if (pts.size() < 2) throw RgtrError("rgtr: need at least two distinct anchor points", {});

  std::vector<bool> active(pts.size(), true);
  std::vector<AnchorPoint> current(pts.begin(), pts.end());
  RgtrResult result;

  auto refit = [&] {
    current.clear();
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (active[i]) current.push_back(pts[i]);
    return llse(current);
  };

  LinearFit fit;
  try {
    fit = refit();
  } catch (const Error& e) {
    throw RgtrError(e.what(), {});
  }

  // Rung k has threshold delta_high - k * delta_dec.
  std::int64_t rung = 0;
  auto threshold = [&](std::int64_t k) { return cfg.delta_high - static_cast<double>(k) * cfg.delta_dec; };

  while (threshold(rung) > cfg.delta_low) {
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (active[i]) worst = std::max(worst, std::abs(apply_fit(fit, pts[i].lts) - pts[i].gts));
    if (worst < threshold(rung)) {
      rung = std::max<std::int64_t>(
          rung + 1, static_cast<std::int64_t>(std::ceil((cfg.delta_high - worst) / cfg.delta_dec)));
      while (threshold(rung) > worst) ++rung;  // guard against rounding in the division
      continue;
    }
    const double delta = threshold(rung);
    CensorStep step{delta, fit, {}};
    std::size_t survivors = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!active[i]) continue;
      if (std::abs(apply_fit(fit, pts[i].lts) - pts[i].gts) >= delta) {
        active[i] = false;
        step.censored.push_back(pts[i]);
      } else {
        ++survivors;
      }
    }
    result.trace.push_back(std::move(step));
    if (survivors < 2)
      throw RgtrError("rgtr: censoring left " + std::to_string(survivors) + " anchor(s) at threshold " +
                          std::to_string(delta) + " s",
                      std::move(result.trace));
    try {
      fit = refit();
    } catch (const Error& e) {
      throw RgtrError(e.what(), std::move(result.trace));
    }
    ++rung;
  }

  if (fit.alpha < cfg.alpha_bounds.min || fit.alpha > cfg.alpha_bounds.max || !std::isfinite(fit.beta))
    throw RgtrError("rgtr: fitted clock rate " + std::to_string(fit.alpha) + " outside sanity bounds",
                    std::move(result.trace));
  result.fit = fit;
  result.iterations = static_cast<int>(result.trace.size()) + 1;
  for (std::size_t i = 0; i < pts.size(); ++i) (active[i] ? result.used : result.censored).insert(pts[i]);
  return result;
}

/// Picks the most populated Hough bin (ties to the smaller key) and fits it.
inline RgtrResult clock_fit(std::span<const AnchorPoint> anchors, const RgtrConfig& cfg) {
  const HoughBins bins = hough_quantize(anchors, cfg);
  if (bins.empty()) throw RgtrError("rgtr: no anchor pair has a plausible clock rate", {});
  auto best = bins.begin();
  for (auto it = bins.begin(); it != bins.end(); ++it)
    if (it->second.size() > best->second.size()) best = it;
  const std::vector<AnchorPoint> members(best->second.begin(), best->second.end());
  RgtrResult result = compute_alpha_beta(members, cfg);
  result.bin_key = best->first;
  return result;
}

}  // namespace tsrecon
