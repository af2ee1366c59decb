#pragma once

#include <span>
#include <string>
#include <vector>

#include "afpipe/ecg.hpp"
#include "afpipe/filter.hpp"

namespace afpipe {

struct PreprocessConfig {
  int target_fs = 250;          // Hz
  double cutoff_hz = 50.0;      // low-pass cutoff
  int filter_order = 4;
  double window_s = 5.0;        // window length w
  double overlap_s = 1.0;       // consecutive windows share this much
  double label_threshold_p = 0.5;

  void validate() const {
    if (target_fs <= 0) throw ConfigError("preprocess: target_fs must be positive");
    if (cutoff_hz <= 0 || cutoff_hz >= target_fs / 2.0)
      throw ConfigError("preprocess: cutoff_hz must lie in (0, target_fs/2)");
    if (filter_order < 1) throw ConfigError("preprocess: filter_order must be >= 1");
    if (overlap_s < 0 || window_s <= overlap_s)
      throw ConfigError("preprocess: need window_s > overlap_s >= 0");
    if (label_threshold_p < 0 || label_threshold_p > 1)
      throw ConfigError("preprocess: label_threshold_p must be in [0, 1]");
  }

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::llround(window_s * target_fs));
  }
  std::size_t stride_samples() const {
    return static_cast<std::size_t>(std::llround((window_s - overlap_s) * target_fs));
  }
};

// Fixed-length window, min-max scaled to [0, 1], with its majority-vote label.
struct EcgWindow {
  std::vector<double> samples;
  Rhythm label = Rhythm::NonAf;
  std::string source_record;
  std::size_t start_index = 0;
};

// Downsampling only: anti-alias low-pass at 0.45 * target_fs (zero-phase,
// order 8 cascade) followed by linear interpolation onto the target grid.
// When the rate ratio is an integer the interpolation lands exactly on source
// samples, i.e. plain decimation of the filtered signal. Rhythm annotations
// and truth peaks map to the nearest output sample.
inline EcgRecord resample(const EcgRecord& record, int target_fs) {
  record.validate();
  if (target_fs <= 0) throw ConfigError("resample: target_fs must be positive");
  if (record.fs < target_fs)
    throw ConfigError("resample: upsampling " + std::to_string(record.fs) + " -> " +
                      std::to_string(target_fs) + " Hz is unsupported");
  if (record.fs == target_fs) return record;

  const auto sos = butterworth_lowpass_sos(8, 0.45 * target_fs, record.fs);
  const std::vector<double> filtered = filtfilt(sos, record.samples);

  const double ratio = static_cast<double>(target_fs) / record.fs;
  const std::size_t n_in = record.samples.size();
  const std::size_t n_out = static_cast<std::size_t>(std::floor((n_in - 1) * ratio)) + 1;

  EcgRecord out;
  out.record_id = record.record_id;
  out.fs = target_fs;
  out.samples.resize(n_out);
  out.rhythm.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), n_in - 1);
    const std::size_t hi = std::min(lo + 1, n_in - 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = filtered[lo] + frac * (filtered[hi] - filtered[lo]);
    out.rhythm[i] = record.rhythm[std::min(static_cast<std::size_t>(std::llround(pos)), n_in - 1)];
  }
  if (record.rpeaks_truth) {
    std::vector<std::size_t> peaks;
    for (std::size_t p : *record.rpeaks_truth) {
      const auto mapped =
          std::min(static_cast<std::size_t>(std::llround(p * ratio)), n_out - 1);
      if (peaks.empty() || mapped > peaks.back()) peaks.push_back(mapped);
    }
    out.rpeaks_truth = std::move(peaks);
  }
  out.validate();
  return out;
}

// Record-level zero-phase Butterworth low-pass (wander-removal stage of the
// extraction engine). Output length equals input length.
inline EcgRecord butterworth_lowpass(const EcgRecord& record, double cutoff_hz, int order) {
  record.validate();
  const auto sos = butterworth_lowpass_sos(order, cutoff_hz, record.fs);
  EcgRecord out = record;
  out.samples = filtfilt(sos, record.samples);
  return out;
}

// (x - min) / (max - min). A constant signal maps to all 0.5 so that
// degenerate windows stay finite without special-casing downstream.
inline std::vector<double> minmax_scale(std::span<const double> x) {
  if (x.empty()) throw ValidationError("minmax_scale: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> y(x.size());
  if (hi == lo) {
    std::fill(y.begin(), y.end(), 0.5);
    return y;
  }
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - lo) * inv;
  return y;
}

// Slice a record into fixed windows at stride (window_s - overlap_s), discard
// the trailing partial window, min-max scale each window independently, and
// label it AF when the AF-sample fraction strictly exceeds label_threshold_p.
inline std::vector<EcgWindow> window_and_label(const EcgRecord& record,
                                               const PreprocessConfig& cfg) {
  record.validate();
  cfg.validate();
  if (record.fs != cfg.target_fs)
    throw ValidationError("window_and_label: record fs " + std::to_string(record.fs) +
                          " != target_fs " + std::to_string(cfg.target_fs));

  const std::size_t wlen = cfg.window_samples();
  const std::size_t stride = cfg.stride_samples();
  std::vector<EcgWindow> windows;
  if (record.samples.size() < wlen) return windows;

  for (std::size_t off = 0; off + wlen <= record.samples.size(); off += stride) {
    EcgWindow w;
    w.source_record = record.record_id;
    w.start_index = off;
    w.samples = minmax_scale(std::span(record.samples).subspan(off, wlen));
    std::size_t af = 0;
    for (std::size_t i = off; i < off + wlen; ++i) af += record.rhythm[i] == Rhythm::Af;
    const double ratio = static_cast<double>(af) / static_cast<double>(wlen);
    w.label = ratio > cfg.label_threshold_p ? Rhythm::Af : Rhythm::NonAf;
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace afpipe
