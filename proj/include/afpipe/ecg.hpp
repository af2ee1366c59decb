#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "afpipe/common.hpp"

namespace afpipe {

// Raw single-channel ECG trace with a per-sample rhythm annotation.
// rpeaks_truth is only present on synthetic/test records and carries the
// ground-truth R-peak sample indices.
struct EcgRecord {
  std::string record_id;
  std::vector<double> samples;  // mV
  int fs = 0;                   // Hz
  std::vector<Rhythm> rhythm;
  std::optional<std::vector<std::size_t>> rpeaks_truth;

  double duration_s() const { return static_cast<double>(samples.size()) / fs; }

  void validate() const {
    if (samples.empty()) throw ValidationError(record_id + ": record has no samples");
    if (fs <= 0) throw ValidationError(record_id + ": sampling frequency must be positive");
    if (rhythm.size() != samples.size())
      throw ValidationError(record_id + ": rhythm annotation length " + std::to_string(rhythm.size()) +
                            " != sample count " + std::to_string(samples.size()));
    if (rpeaks_truth) {
      const auto& p = *rpeaks_truth;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] >= samples.size())
          throw ValidationError(record_id + ": truth peak index " + std::to_string(p[i]) + " out of bounds");
        if (i > 0 && p[i] <= p[i - 1])
          throw ValidationError(record_id + ": truth peaks not strictly increasing at position " +
                                std::to_string(i));
      }
    }
  }
};

struct SynthesisSpec {
  double duration_s = 60.0;
  int fs = 250;
  double rr_mean_ms = 800.0;
  double rr_jitter_ms = 0.0;   // uniform half-width around rr_mean_ms
  double qrs_width_ms = 20.0;  // Gaussian sigma of the QRS bump
  double noise_std = 0.0;      // additive Gaussian noise, mV
  double baseline_wander_hz = 0.0;
  double baseline_wander_amp = 0.0;  // mV
  Rhythm label = Rhythm::NonAf;
  std::uint64_t seed = 0;
  std::string record_id;  // defaults to "synth-<seed>"

  void validate() const {
    if (duration_s <= 0) throw ValidationError("synthesis: duration must be positive");
    if (fs <= 0) throw ValidationError("synthesis: fs must be positive");
    if (rr_jitter_ms < 0) throw ValidationError("synthesis: rr jitter must be non-negative");
    if (rr_mean_ms <= rr_jitter_ms)
      throw ValidationError("synthesis: rr_mean_ms must exceed rr_jitter_ms");
    if (qrs_width_ms <= 0) throw ValidationError("synthesis: qrs width must be positive");
    if (noise_std < 0) throw ValidationError("synthesis: noise std must be non-negative");
  }
};

// Gaussian-bump beats at accumulated RR times. Each bump is centered on the
// sample nearest its accumulated time so that, noise-free, the signal maximum
// falls exactly on the recorded truth index. QRS amplitude is 1.0 mV.
inline EcgRecord synthesize(const SynthesisSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const std::size_t n = static_cast<std::size_t>(spec.duration_s * spec.fs);
  EcgRecord rec;
  rec.record_id = spec.record_id.empty() ? "synth-" + std::to_string(spec.seed) : spec.record_id;
  rec.fs = spec.fs;
  rec.samples.assign(n, 0.0);
  rec.rhythm.assign(n, spec.label);

  std::vector<std::size_t> peaks;
  double t_ms = 0.0;
  for (;;) {
    t_ms += spec.rr_mean_ms + rng.uniform(-spec.rr_jitter_ms, spec.rr_jitter_ms);
    const auto idx = static_cast<std::size_t>(std::llround(t_ms * spec.fs / 1000.0));
    if (idx >= n) break;
    peaks.push_back(idx);
  }

  const double sigma_samples = spec.qrs_width_ms * spec.fs / 1000.0;
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(5.0 * sigma_samples));
  for (std::size_t p : peaks) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(p) - reach);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(p) + reach);
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double d = static_cast<double>(i) - static_cast<double>(p);
      rec.samples[i] += std::exp(-d * d / (2.0 * sigma_samples * sigma_samples));
    }
  }

  if (spec.baseline_wander_amp != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      rec.samples[i] += spec.baseline_wander_amp *
                        std::sin(2.0 * M_PI * spec.baseline_wander_hz * i / spec.fs);
    }
  }
  if (spec.noise_std > 0.0) {
    for (std::size_t i = 0; i < n; ++i) rec.samples[i] += rng.normal(0.0, spec.noise_std);
  }

  rec.rpeaks_truth = std::move(peaks);
  rec.validate();
  return rec;
}

// Record CSV: `# fs=<int>` header, optional `# rpeaks=<i,j,...>`, then one
// `<amplitude>,<AF|NON_AF>` row per sample. Amplitudes are written as %.6f
// with LF endings, so save(load(f)) is byte-identical for canonical files.
inline EcgRecord load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");

  EcgRecord rec;
  rec.record_id = path.stem().string();

  std::string line;
  std::size_t lineno = 0;
  bool have_fs = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);

    if (line[0] == '#') {
      if (line.rfind("# fs=", 0) == 0) {
        try {
          rec.fs = std::stoi(line.substr(5));
        } catch (const std::exception&) {
          throw ParseError(where + ": bad fs header '" + line + "'");
        }
        have_fs = true;
      } else if (line.rfind("# rpeaks=", 0) == 0) {
        std::vector<std::size_t> peaks;
        std::stringstream ss(line.substr(9));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          try {
            peaks.push_back(std::stoull(tok));
          } catch (const std::exception&) {
            throw ParseError(where + ": bad rpeaks index '" + tok + "'");
          }
        }
        rec.rpeaks_truth = std::move(peaks);
      } else {
        throw ParseError(where + ": unknown header '" + line + "'");
      }
      continue;
    }

    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(where + ": expected '<amplitude>,<AF|NON_AF>'");
    const std::string amp_str = line.substr(0, comma);
    const std::string rhythm_str = line.substr(comma + 1);

    char* end = nullptr;
    const double amp = std::strtod(amp_str.c_str(), &end);
    if (end == amp_str.c_str() || *end != '\0')
      throw ParseError(where + ": bad amplitude '" + amp_str + "'");
    Rhythm r;
    try {
      r = rhythm_from_string(rhythm_str);
    } catch (const std::invalid_argument&) {
      throw ParseError(where + ": bad rhythm '" + rhythm_str + "'");
    }
    rec.samples.push_back(amp);
    rec.rhythm.push_back(r);
  }

  if (!have_fs) throw ParseError(path.string() + ": missing '# fs=<int>' header");
  try {
    rec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return rec;
}

inline void save_csv(const EcgRecord& rec, const std::filesystem::path& path) {
  rec.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "# fs=" << rec.fs << "\n";
  if (rec.rpeaks_truth && !rec.rpeaks_truth->empty()) {
    out << "# rpeaks=";
    const auto& p = *rec.rpeaks_truth;
    for (std::size_t i = 0; i < p.size(); ++i) out << (i ? "," : "") << p[i];
    out << "\n";
  }
  char buf[64];
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", rec.samples[i]);
    out << buf << ',' << to_string(rec.rhythm[i]) << "\n";
  }
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace afpipe
