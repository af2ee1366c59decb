#pragma once

#include <span>
#include <vector>

#include "afpipe/common.hpp"
#include "afpipe/preprocess.hpp"
#include "afpipe/swt.hpp"

namespace afpipe {

struct DetectorConfig {
  int swt_level = 4;
  double refractory_ms = 250.0;
  double threshold_quantile = 0.95;
  double snap_ms = 50.0;         // raw-signal local-max search half-width
  double integration_ms = 150.0; // moving-average width over squared detail
  double threshold_scale = 0.25; // threshold = scale * quantile(energy)

  void validate() const {
    if (swt_level < 1 || swt_level > 10) throw ConfigError("detector: swt_level out of range");
    if (refractory_ms <= 0) throw ConfigError("detector: refractory_ms must be positive");
    if (threshold_quantile <= 0 || threshold_quantile >= 1)
      throw ConfigError("detector: threshold_quantile must be in (0, 1)");
    if (snap_ms < 0) throw ConfigError("detector: snap_ms must be non-negative");
    if (integration_ms <= 0) throw ConfigError("detector: integration_ms must be positive");
    if (threshold_scale <= 0) throw ConfigError("detector: threshold_scale must be positive");
  }
};

struct RPeakList {
  std::vector<std::size_t> indices;  // strictly increasing, gaps >= refractory
  int fs = 0;
};

// Normal-to-normal interval series in milliseconds. Detected RR intervals are
// used as NN directly; no ectopic-beat rejection is applied.
struct NnSeries {
  std::vector<double> intervals_ms;
};

namespace detail {

// Centered moving average normalized by the number of in-range samples.
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
  const std::size_t n = x.size();
  const std::size_t half = width / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(i + half + 1, n);
    y[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return y;
}

// Strongest-first selection under a minimum index gap. Ties break toward the
// earlier index so the result is deterministic.
inline std::vector<std::size_t> enforce_refractory(std::vector<std::pair<double, std::size_t>> cand,
                                                   std::size_t min_gap) {
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> kept;
  for (const auto& [strength, idx] : cand) {
    bool ok = true;
    for (std::size_t other : kept) {
      const std::size_t gap = idx > other ? idx - other : other - idx;
      if (gap < min_gap) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(idx);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace detail

// SWT R-peak detector: square the level-4 (by default) detail coefficients,
// integrate over a 150 ms moving window, threshold at 0.25x the 95th
// percentile of the integrated energy, enforce the refractory period, then
// snap each detection to the raw-signal local maximum within +-snap_ms.
// Thresholding is relative, so detection is invariant to positive rescaling
// of the input.
inline RPeakList detect_rpeaks(std::span<const double> samples, int fs, const DetectorConfig& cfg) {
  cfg.validate();
  if (fs <= 0) throw ConfigError("detector: fs must be positive");
  const std::size_t n = samples.size();
  if (n < (std::size_t{1} << cfg.swt_level))
    throw DetectorError("detector: window of " + std::to_string(n) +
                        " samples is shorter than 2^" + std::to_string(cfg.swt_level));

  // A constant window carries no beats; bail out before floating-point
  // residue in the wavelet cascade can masquerade as energy.
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  if (*lo_it == *hi_it) return {{}, fs};

  std::vector<double> energy = swt_detail(samples, cfg.swt_level);
  for (double& v : energy) v *= v;
  const auto int_width = static_cast<std::size_t>(
      std::max<std::int64_t>(1, std::llround(cfg.integration_ms * fs / 1000.0)));
  energy = detail::moving_average(energy, int_width);

  const double thr = cfg.threshold_scale * quantile(energy, cfg.threshold_quantile);

  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i > 0 ? energy[i - 1] : -1.0;
    const double next = i + 1 < n ? energy[i + 1] : -1.0;
    if (energy[i] > thr && energy[i] > prev && energy[i] >= next)
      candidates.emplace_back(energy[i], i);
  }

  const auto refractory = static_cast<std::size_t>(
      std::max<std::int64_t>(1, std::llround(cfg.refractory_ms * fs / 1000.0)));
  const std::vector<std::size_t> energy_peaks = detail::enforce_refractory(std::move(candidates), refractory);

  // Snap to the raw local maximum, then re-apply the refractory rule on the
  // snapped positions (two energy peaks may snap to nearby raw maxima).
  const auto snap = static_cast<std::size_t>(std::llround(cfg.snap_ms * fs / 1000.0));
  std::vector<std::pair<double, std::size_t>> snapped;
  for (std::size_t p : energy_peaks) {
    const std::size_t lo = p >= snap ? p - snap : 0;
    const std::size_t hi = std::min(p + snap, n - 1);
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i) {
      if (samples[i] > samples[best]) best = i;
    }
    snapped.emplace_back(samples[best], best);
  }

  RPeakList out;
  out.fs = fs;
  out.indices = detail::enforce_refractory(std::move(snapped), refractory);
  return out;
}

inline RPeakList detect_rpeaks(const EcgWindow& window, int fs, const DetectorConfig& cfg) {
  return detect_rpeaks(std::span(window.samples), fs, cfg);
}

// intervals_ms[i] = (indices[i+1] - indices[i]) * 1000 / fs
inline NnSeries to_nn_series(const RPeakList& peaks) {
  if (peaks.indices.size() < 2)
    throw InsufficientDataError("to_nn_series: need >= 2 peaks, got " +
                                std::to_string(peaks.indices.size()));
  if (peaks.fs <= 0) throw ValidationError("to_nn_series: fs must be positive");
  NnSeries nn;
  nn.intervals_ms.reserve(peaks.indices.size() - 1);
  for (std::size_t i = 0; i + 1 < peaks.indices.size(); ++i) {
    nn.intervals_ms.push_back(
        static_cast<double>(peaks.indices[i + 1] - peaks.indices[i]) * 1000.0 / peaks.fs);
  }
  return nn;
}

}  // namespace afpipe
