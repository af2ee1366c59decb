#include <catch2/catch_amalgamated.hpp>

#include "afpipe/ecg.hpp"
#include "afpipe/rpeak.hpp"
#include "oracles.hpp"

using namespace afpipe;

namespace {

// One synthesized record scaled like a production window.
std::vector<double> scaled_window(const EcgRecord& rec) { return minmax_scale(rec.samples); }

}  // namespace

TEST_CASE("detector finds every beat of a clean synthetic window") {
  SynthesisSpec spec;
  spec.duration_s = 5.0;
  spec.rr_mean_ms = 900.0;
  spec.rr_jitter_ms = 0.0;
  spec.noise_std = 0.0;
  const EcgRecord rec = synthesize(spec);
  REQUIRE(rec.rpeaks_truth->size() == 5);

  const RPeakList peaks = detect_rpeaks(scaled_window(rec), rec.fs, DetectorConfig{});
  REQUIRE(peaks.indices.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto t = (*rec.rpeaks_truth)[i];
    const auto d = peaks.indices[i];
    CHECK((d > t ? d - t : t - d) <= 1);
  }
}

TEST_CASE("flat or constant windows yield no peaks") {
  const std::vector<double> zeros(1250, 0.0);
  CHECK(detect_rpeaks(zeros, 250, DetectorConfig{}).indices.empty());
  const std::vector<double> halves(1250, 0.5);
  CHECK(detect_rpeaks(halves, 250, DetectorConfig{}).indices.empty());
}

TEST_CASE("window shorter than 2^level is a detector error") {
  const std::vector<double> tiny(15, 0.0);
  CHECK_THROWS_AS(detect_rpeaks(tiny, 250, DetectorConfig{}), DetectorError);
}

TEST_CASE("sensitivity and positive predictivity on noisy windows") {
  // 100 seeded 5 s windows with noise_std 0.05, matched at +-50 ms.
  std::size_t matched = 0, missed = 0, spurious = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthesisSpec spec;
    spec.duration_s = 5.0;
    spec.rr_mean_ms = 820.0;
    spec.rr_jitter_ms = 120.0;
    spec.noise_std = 0.05;
    spec.seed = seed;
    const EcgRecord rec = synthesize(spec);

    const RPeakList det = detect_rpeaks(scaled_window(rec), rec.fs, DetectorConfig{});
    const auto counts = oracles::match_peaks(det.indices, *rec.rpeaks_truth,
                                             static_cast<std::size_t>(0.050 * rec.fs));
    matched += counts.matched;
    missed += counts.missed;
    spurious += counts.spurious;
  }
  const double sensitivity = static_cast<double>(matched) / (matched + missed);
  const double ppv = static_cast<double>(matched) / (matched + spurious);
  INFO("matched=" << matched << " missed=" << missed << " spurious=" << spurious);
  CHECK(sensitivity >= 0.99);
  CHECK(ppv >= 0.99);
}

TEST_CASE("detection is shift-equivariant on clean input") {
  SynthesisSpec spec;
  spec.duration_s = 5.0;
  spec.rr_mean_ms = 1100.0;
  spec.rr_jitter_ms = 0.0;
  spec.noise_std = 0.0;
  const EcgRecord rec = synthesize(spec);
  const std::vector<double>& base = rec.samples;
  const RPeakList ref = detect_rpeaks(base, rec.fs, DetectorConfig{});
  REQUIRE_FALSE(ref.indices.empty());

  for (std::size_t k : {1u, 7u, 25u, 64u, 100u}) {
    std::vector<double> shifted(base.size(), 0.0);
    for (std::size_t i = k; i < base.size(); ++i) shifted[i] = base[i - k];
    const RPeakList out = detect_rpeaks(shifted, rec.fs, DetectorConfig{});
    REQUIRE(out.indices.size() == ref.indices.size());
    for (std::size_t i = 0; i < out.indices.size(); ++i) {
      CHECK(out.indices[i] == ref.indices[i] + k);
    }
  }
}

TEST_CASE("detection is invariant to positive rescaling") {
  SynthesisSpec spec;
  spec.duration_s = 5.0;
  spec.rr_jitter_ms = 90.0;
  spec.noise_std = 0.04;
  spec.seed = 12;
  const EcgRecord rec = synthesize(spec);

  const RPeakList ref = detect_rpeaks(rec.samples, rec.fs, DetectorConfig{});
  for (double a : {0.003, 2.5, 1700.0}) {
    std::vector<double> scaled(rec.samples.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = a * rec.samples[i];
    CHECK(detect_rpeaks(scaled, rec.fs, DetectorConfig{}).indices == ref.indices);
  }
}

TEST_CASE("detected peaks honor the refractory spacing") {
  SynthesisSpec spec;
  spec.duration_s = 5.0;
  spec.rr_mean_ms = 400.0;
  spec.rr_jitter_ms = 30.0;
  spec.seed = 2;
  const EcgRecord rec = synthesize(spec);
  DetectorConfig cfg;
  const RPeakList det = detect_rpeaks(scaled_window(rec), rec.fs, cfg);
  const auto gap = static_cast<std::size_t>(std::llround(cfg.refractory_ms * rec.fs / 1000.0));
  for (std::size_t i = 0; i + 1 < det.indices.size(); ++i) {
    CHECK(det.indices[i + 1] - det.indices[i] >= gap);
  }
}

TEST_CASE("to_nn_series conversions") {
  CHECK(to_nn_series(RPeakList{{0, 250, 500}, 250}).intervals_ms ==
        std::vector<double>{1000.0, 1000.0});
  CHECK(to_nn_series(RPeakList{{0, 200}, 250}).intervals_ms == std::vector<double>{800.0});
  CHECK_THROWS_AS(to_nn_series(RPeakList{{5}, 250}), InsufficientDataError);
  CHECK_THROWS_AS(to_nn_series(RPeakList{{}, 250}), InsufficientDataError);
}

TEST_CASE("NN intervals telescope to the peak span") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::size_t> idx;
    std::size_t cur = rng.index(100);
    const std::size_t count = 2 + rng.index(20);
    for (std::size_t i = 0; i < count; ++i) {
      idx.push_back(cur);
      cur += 1 + rng.index(400);
    }
    const int fs = 250;
    const NnSeries nn = to_nn_series(RPeakList{idx, fs});
    REQUIRE(nn.intervals_ms.size() == idx.size() - 1);
    double sum = 0;
    for (double v : nn.intervals_ms) {
      CHECK(v > 0);
      sum += v;
    }
    const double span_ms = static_cast<double>(idx.back() - idx.front()) * 1000.0 / fs;
    CHECK(sum == Catch::Approx(span_ms).margin(1e-9));
  }
}
