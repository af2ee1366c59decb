#pragma once

#include <array>
#include <string>

#include "afpipe/common.hpp"
#include "afpipe/rpeak.hpp"

namespace afpipe {

inline constexpr std::size_t kNumFeatures = 14;

// Canonical feature order; every serialized table uses it.
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "rmssd",  "sdsd",    "sdnn",   "mean_hr", "min_hr",  "max_hr",  "mean_rr",
    "nni_20", "pnni_20", "nni_50", "pnni_50", "mean_nni", "cvsd",   "cvnni"};

inline std::size_t feature_index(const std::string& name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (name == kFeatureNames[i]) return i;
  }
  throw ValidationError("unknown feature name: '" + name + "'");
}

// The 14 time-domain HRV features. Standard deviations are population
// deviations; pNNx counts use a strict > threshold and are normalized by the
// total interval count. mean_rr and mean_nni coincide because detected RR
// intervals are treated as NN without ectopic filtering.
struct FeatureVector {
  double rmssd = 0;     // sqrt(mean of squared successive differences), ms
  double sdsd = 0;      // std of successive differences, ms
  double sdnn = 0;      // std of intervals, ms
  double mean_hr = 0;   // bpm, averaged per interval
  double min_hr = 0;    // bpm
  double max_hr = 0;    // bpm
  double mean_rr = 0;   // ms
  double nni_20 = 0;    // count of |diff| > 20 ms
  double pnni_20 = 0;   // nni_20 / interval count
  double nni_50 = 0;    // count of |diff| > 50 ms
  double pnni_50 = 0;   // nni_50 / interval count
  double mean_nni = 0;  // ms
  double cvsd = 0;      // rmssd / mean_nni
  double cvnni = 0;     // sdnn / mean_nni

  std::array<double, kNumFeatures> values() const {
    return {rmssd,  sdsd,    sdnn,   mean_hr, min_hr,   max_hr, mean_rr,
            nni_20, pnni_20, nni_50, pnni_50, mean_nni, cvsd,   cvnni};
  }
};

inline FeatureVector extract_features(const NnSeries& nn) {
  const auto& iv = nn.intervals_ms;
  const std::size_t n = iv.size();
  if (n < 2)
    throw InsufficientDataError("extract_features: need >= 2 intervals, got " + std::to_string(n));
  for (double v : iv) {
    if (!(v > 0)) throw ValidationError("extract_features: intervals must be positive");
  }

  std::vector<double> diff(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) diff[i] = iv[i + 1] - iv[i];

  FeatureVector f;
  double ss = 0.0;
  std::size_t n20 = 0, n50 = 0;
  for (double d : diff) {
    ss += d * d;
    if (std::abs(d) > 20.0) ++n20;
    if (std::abs(d) > 50.0) ++n50;
  }
  f.rmssd = std::sqrt(ss / static_cast<double>(diff.size()));
  f.sdsd = population_std(diff);
  f.sdnn = population_std(iv);
  f.mean_nni = mean_of(iv);
  f.mean_rr = f.mean_nni;

  double hr_sum = 0.0, hr_min = 0.0, hr_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double hr = 60000.0 / iv[i];
    hr_sum += hr;
    if (i == 0 || hr < hr_min) hr_min = hr;
    if (i == 0 || hr > hr_max) hr_max = hr;
  }
  f.mean_hr = hr_sum / static_cast<double>(n);
  f.min_hr = hr_min;
  f.max_hr = hr_max;

  f.nni_20 = static_cast<double>(n20);
  f.nni_50 = static_cast<double>(n50);
  f.pnni_20 = f.nni_20 / static_cast<double>(n);
  f.pnni_50 = f.nni_50 / static_cast<double>(n);
  f.cvsd = f.rmssd / f.mean_nni;
  f.cvnni = f.sdnn / f.mean_nni;
  return f;
}

}  // namespace afpipe
