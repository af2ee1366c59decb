#include <catch2/catch_amalgamated.hpp>

#include "afpipe/harness.hpp"
#include "afpipe/report.hpp"

using namespace afpipe;

namespace {

// Small two-class corpus: irregular-RR records labeled AF, steadier ones
// non-AF. windows_per_record fixes the record duration.
std::vector<EcgRecord> small_corpus(int records_per_class, int windows_per_record,
                                    std::uint64_t seed_base) {
  const double duration = 4.0 * (windows_per_record - 1) + 5.0;
  std::vector<EcgRecord> out;
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < records_per_class; ++i) {
      SynthesisSpec spec;
      spec.duration_s = duration;
      spec.rr_mean_ms = 800.0;
      spec.rr_jitter_ms = cls ? 150.0 : 20.0;
      spec.noise_std = 0.05;
      spec.label = cls ? Rhythm::Af : Rhythm::NonAf;
      spec.seed = seed_base + static_cast<std::uint64_t>(cls * 1000 + i);
      spec.record_id = std::string(cls ? "af" : "nsr") + "-" + std::to_string(i);
      out.push_back(synthesize(spec));
    }
  }
  return out;
}

TrainConfig fast_train_cfg() {
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.warmup_epochs = 20;
  return cfg;
}

}  // namespace

TEST_CASE("stratified folds are disjoint, covering, and balanced") {
  FeatureDataset ds;
  Rng rng(15);
  for (int i = 0; i < 103; ++i) {
    std::array<double, kNumFeatures> row{};
    ds.rows.push_back(row);
    ds.labels.push_back(i < 51 ? 0 : 1);
    ds.source.push_back("rec" + std::to_string(i % 7));
  }
  const std::vector<int> folds = stratified_folds(ds, 5, 99);

  std::array<std::array<int, 2>, 5> per_fold{};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(folds[i] >= 0);
    REQUIRE(folds[i] < 5);
    per_fold[folds[i]][ds.labels[i]] += 1;
  }
  for (int cls = 0; cls < 2; ++cls) {
    int lo = 1 << 20, hi = 0;
    for (const auto& f : per_fold) {
      lo = std::min(lo, f[cls]);
      hi = std::max(hi, f[cls]);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("by-record folds keep windows of a record together") {
  FeatureDataset ds;
  for (int i = 0; i < 60; ++i) {
    ds.rows.push_back({});
    ds.labels.push_back(i % 2);
    ds.source.push_back("rec" + std::to_string(i % 6));
  }
  const std::vector<int> folds = stratified_folds(ds, 3, 4, /*by_record=*/true);
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = seen.find(ds.source[i]);
    if (it == seen.end()) seen[ds.source[i]] = folds[i];
    else CHECK(it->second == folds[i]);
  }
}

TEST_CASE("cross-validated plan produces the requested rows and folds") {
  const auto records = small_corpus(2, 12, 500);
  PreprocessConfig pre;
  DetectorConfig det;
  const DatasetBundle bundle = prepare_bundle("train", records, pre, det);
  REQUIRE(bundle.features.size() >= 40);

  const FeatureRanking ranking = rank_features(bundle.features);
  ExperimentPlan plan;
  plan.subsets = {top_n(ranking, 4), top_n(ranking, 14)};
  plan.train_cfg = fast_train_cfg();
  plan.pre = pre;
  plan.det = det;
  plan.seed = 21;
  plan.profile_window_cap = 30;
  plan.predict_reps = 4;

  const RunReport report = run_plan(plan, bundle, bundle);
  REQUIRE(report.subsets.size() == 2);
  for (const SubsetResult& s : report.subsets) {
    CHECK(s.cv.folds.size() == 5);
    CHECK(s.model_size_bytes == s.model_bytes.size());
    CHECK(s.model_size_bytes <= 1024);

    double frac_sum = 0.0;
    for (const auto& [name, frac] : s.timing.stages.fractions()) frac_sum += frac;
    CHECK(frac_sum == Catch::Approx(1.0).margin(0.01));
  }
  CHECK(report.subsets[0].features.size() == 4);
  CHECK(report.subsets[1].features.size() == 14);
}

TEST_CASE("reports are deterministic once timing is masked") {
  const auto records = small_corpus(2, 8, 900);
  PreprocessConfig pre;
  DetectorConfig det;
  const DatasetBundle bundle = prepare_bundle("train", records, pre, det);
  const FeatureRanking ranking = rank_features(bundle.features);

  ExperimentPlan plan;
  plan.subsets = {top_n(ranking, 6)};
  plan.train_cfg = fast_train_cfg();
  plan.pre = pre;
  plan.det = det;
  plan.seed = 4242;
  plan.profile_window_cap = 20;
  plan.predict_reps = 2;

  const RunReport a = run_plan(plan, bundle, bundle);
  const RunReport b = run_plan(plan, bundle, bundle);
  CHECK(mask_timing(report_json(a)).dump() == mask_timing(report_json(b)).dump());
  CHECK(a.subsets[0].model_bytes == b.subsets[0].model_bytes);

  plan.seed = 4243;
  const RunReport c = run_plan(plan, bundle, bundle);
  CHECK(mask_timing(report_json(a)).dump() != mask_timing(report_json(c)).dump());
}

TEST_CASE("cross-dataset generalization stays close to in-dataset accuracy") {
  const auto rec_a = small_corpus(2, 14, 1000);
  const auto rec_b = small_corpus(2, 14, 7000);  // same structure, fresh seeds
  PreprocessConfig pre;
  DetectorConfig det;
  const DatasetBundle a = prepare_bundle("A", rec_a, pre, det);
  const DatasetBundle b = prepare_bundle("B", rec_b, pre, det);

  const FeatureRanking ranking = rank_features(a.features);
  ExperimentPlan cv_plan;
  cv_plan.train_id = cv_plan.test_id = "A";
  cv_plan.subsets = {top_n(ranking, 14)};
  cv_plan.train_cfg = fast_train_cfg();
  cv_plan.pre = pre;
  cv_plan.det = det;
  cv_plan.seed = 5;
  cv_plan.profile_window_cap = 20;
  cv_plan.predict_reps = 2;

  ExperimentPlan cross_plan = cv_plan;
  cross_plan.test_id = "B";

  const RunReport in_dataset = run_plan(cv_plan, a, a);
  const RunReport cross = run_plan(cross_plan, a, b);
  CHECK(cross.subsets[0].cv.folds.empty());
  const double acc_in = in_dataset.subsets[0].pooled.accuracy;
  const double acc_cross = cross.subsets[0].pooled.accuracy;
  INFO("in=" << acc_in << " cross=" << acc_cross);
  CHECK(std::fabs(acc_in - acc_cross) <= 0.05);
}

TEST_CASE("profile accounting: fractions sum to one, stages are positive") {
  const auto records = small_corpus(1, 12, 300);
  PreprocessConfig pre;
  DetectorConfig det;
  const DatasetBundle bundle = prepare_bundle("p", records, pre, det);

  TrainConfig cfg = fast_train_cfg();
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  const BonsaiModel model =
      train(restrict_rows(bundle.features, names), bundle.features.labels, names, cfg);

  const ProfileReport rep = profile_pipeline(bundle.records, pre, det, model, 24);
  CHECK(rep.windows_profiled == 24);
  double sum = 0.0;
  for (const auto& [name, frac] : rep.stages.fractions()) {
    CHECK(frac >= 0.0);
    sum += frac;
  }
  CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  CHECK(rep.pipeline_ms_median > 0.0);
  CHECK(rep.stages.total_ms() == Catch::Approx(rep.pipeline_ms_median).epsilon(0.25));
}

TEST_CASE("measure_inference rejects an empty window set") {
  DatasetBundle empty;
  empty.id = "none";
  BonsaiModel m;
  m.depth = 0;
  m.d_proj = 1;
  m.d_in = 1;
  m.feat_mean = {0.0};
  m.feat_std = {1.0};
  m.feature_names = {"rmssd"};
  m.Z = Matrix(1, 2);
  m.W = Matrix(1, 1);
  m.V = Matrix(1, 1);
  m.Theta = Matrix(0, 0);
  CHECK_THROWS_AS(measure_inference(empty, m, PreprocessConfig{}, DetectorConfig{}),
                  ValidationError);
}

TEST_CASE("config files round into the pipeline configuration") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "afpipe_cfg.txt";
  {
    std::ofstream out(path);
    out << "# comment\n";
    out << "cutoff_hz=40\n";
    out << "depth=1\n";
    out << "swt_level = 3\n";
  }
  PipelineConfig cfg;
  apply_config(cfg, parse_config_file(path));
  CHECK(cfg.pre.cutoff_hz == 40.0);
  CHECK(cfg.train.depth == 1);
  CHECK(cfg.det.swt_level == 3);

  {
    std::ofstream out(path);
    out << "not_a_key=1\n";
  }
  PipelineConfig cfg2;
  CHECK_THROWS_AS(apply_config(cfg2, parse_config_file(path)), ConfigError);
}
