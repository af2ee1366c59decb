#include <catch2/catch_amalgamated.hpp>

#include "afpipe/preprocess.hpp"
#include "oracles.hpp"

using namespace afpipe;

namespace {

EcgRecord make_record(std::vector<double> samples, int fs,
                      std::vector<Rhythm> rhythm = {}) {
  EcgRecord rec;
  rec.record_id = "test";
  rec.fs = fs;
  rec.samples = std::move(samples);
  rec.rhythm = rhythm.empty() ? std::vector<Rhythm>(rec.samples.size(), Rhythm::NonAf)
                              : std::move(rhythm);
  return rec;
}

std::vector<double> tone(double freq, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * freq * i / fs);
  return x;
}

}  // namespace

TEST_CASE("resample at the target rate is the identity") {
  const EcgRecord rec = make_record(tone(10.0, 250.0, 1000), 250);
  const EcgRecord out = resample(rec, 250);
  CHECK(out.samples == rec.samples);
  CHECK(out.fs == 250);
}

TEST_CASE("resample rejects upsampling") {
  const EcgRecord rec = make_record(tone(10.0, 250.0, 500), 250);
  CHECK_THROWS_AS(resample(rec, 500), ConfigError);
}

TEST_CASE("integer-ratio resampling decimates the anti-aliased signal") {
  const EcgRecord rec = make_record(tone(20.0, 500.0, 1000), 500);
  const EcgRecord out = resample(rec, 250);
  REQUIRE(out.samples.size() == 500);

  const auto sos = butterworth_lowpass_sos(8, 0.45 * 250.0, 500.0);
  const std::vector<double> filtered = filtfilt(sos, rec.samples);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    CHECK(out.samples[i] == Catch::Approx(filtered[2 * i]).margin(1e-12));
  }
}

TEST_CASE("resample 300 -> 250 suppresses alias-band tones, keeps passband") {
  // A 140 Hz tone lies above the anti-alias cutoff (112.5 Hz) and would fold
  // to 110 Hz after the rate change; it must come through >= 20 dB down.
  const std::size_t n = 3000;
  const EcgRecord hi = make_record(tone(140.0, 300.0, n), 300);
  const EcgRecord hi_out = resample(hi, 250);
  const double alias_amp =
      oracles::tone_amplitude(hi_out.samples, 250.0, 110.0, 250, hi_out.samples.size() - 250);
  CHECK(20.0 * std::log10(1.0 / alias_amp) >= 20.0);

  // A 20 Hz tone is deep in the passband and survives within 1 dB.
  const EcgRecord lo = make_record(tone(20.0, 300.0, n), 300);
  const EcgRecord lo_out = resample(lo, 250);
  const double pass_amp =
      oracles::tone_amplitude(lo_out.samples, 250.0, 20.0, 250, lo_out.samples.size() - 250);
  CHECK(pass_amp >= std::pow(10.0, -1.0 / 20.0));
}

TEST_CASE("resample preserves duration within one sample") {
  for (int src : {300, 360, 500}) {
    const EcgRecord rec = make_record(tone(5.0, src, 2048), src);
    const EcgRecord out = resample(rec, 250);
    const double dur_in = static_cast<double>(rec.samples.size()) / src;
    const double dur_out = static_cast<double>(out.samples.size()) / 250.0;
    CHECK(std::fabs(dur_in - dur_out) <= 1.0 / 250.0);
  }
}

TEST_CASE("minmax_scale maps extremes to 0 and 1") {
  CHECK(minmax_scale(std::vector<double>{1, 2, 3}) == std::vector<double>{0, 0.5, 1});
  CHECK(minmax_scale(std::vector<double>{-5, 5}) == std::vector<double>{0, 1});
  CHECK(minmax_scale(std::vector<double>{4, 4, 4}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(minmax_scale(std::vector<double>{}), ValidationError);
}

TEST_CASE("minmax_scale is idempotent") {
  Rng rng(11);
  std::vector<double> x(400);
  for (double& v : x) v = rng.normal(0.0, 3.0);
  const auto once = minmax_scale(x);
  const auto twice = minmax_scale(once);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::fabs(twice[i] - once[i]) <= 1e-12);
  }
}

TEST_CASE("window_and_label: 13 s at 5 s / 1 s overlap gives 3 windows") {
  PreprocessConfig cfg;
  const EcgRecord rec = make_record(tone(8.0, 250.0, 13 * 250), 250);
  const auto windows = window_and_label(rec, cfg);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].start_index == 0);
  CHECK(windows[1].start_index == 1000);
  CHECK(windows[2].start_index == 2000);
  for (const EcgWindow& w : windows) {
    CHECK(w.samples.size() == 1250);
    for (double v : w.samples) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("window label follows the strict threshold rule") {
  PreprocessConfig cfg;
  const std::size_t n = 1250;

  std::vector<Rhythm> rhythm(n, Rhythm::NonAf);
  for (std::size_t i = 0; i < 626; ++i) rhythm[i] = Rhythm::Af;
  EcgRecord rec = make_record(tone(8.0, 250.0, n), 250, rhythm);
  CHECK(window_and_label(rec, cfg).at(0).label == Rhythm::Af);  // 626/1250 > 0.5

  std::fill(rhythm.begin(), rhythm.end(), Rhythm::NonAf);
  for (std::size_t i = 0; i < 625; ++i) rhythm[i] = Rhythm::Af;
  rec = make_record(tone(8.0, 250.0, n), 250, rhythm);
  CHECK(window_and_label(rec, cfg).at(0).label == Rhythm::NonAf);  // exactly 0.5 is not AF
}

TEST_CASE("records shorter than one window yield no windows") {
  PreprocessConfig cfg;
  const EcgRecord rec = make_record(tone(8.0, 250.0, 1000), 250);
  CHECK(window_and_label(rec, cfg).empty());
}

TEST_CASE("AF window count is non-increasing in the threshold") {
  Rng rng(23);
  const std::size_t n = 40 * 250;
  std::vector<Rhythm> rhythm(n);
  for (auto& r : rhythm) r = rng.uniform() < 0.5 ? Rhythm::Af : Rhythm::NonAf;
  std::vector<double> samples(n);
  for (double& v : samples) v = rng.normal();
  const EcgRecord rec = make_record(std::move(samples), 250, std::move(rhythm));

  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    PreprocessConfig cfg;
    cfg.label_threshold_p = p;
    std::size_t af = 0;
    for (const EcgWindow& w : window_and_label(rec, cfg)) af += w.label == Rhythm::Af;
    CHECK(af <= prev);
    prev = af;
  }
}

TEST_CASE("window_and_label validates rate agreement") {
  PreprocessConfig cfg;
  const EcgRecord rec = make_record(tone(8.0, 300.0, 3000), 300);
  CHECK_THROWS_AS(window_and_label(rec, cfg), ValidationError);
}

TEST_CASE("preprocess config invariants") {
  PreprocessConfig cfg;
  cfg.cutoff_hz = 125.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PreprocessConfig{};
  cfg.overlap_s = 5.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
