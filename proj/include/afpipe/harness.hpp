#pragma once

#include <chrono>
#include <map>
#include <numeric>

#include "afpipe/bonsai.hpp"
#include "afpipe/dataset.hpp"
#include "afpipe/featsel.hpp"
#include "afpipe/metrics.hpp"

namespace afpipe {

// A record set plus everything derived from it once: records brought to the
// target rate (kept for per-window profiling) and the feature dataset.
struct DatasetBundle {
  std::string id;
  std::vector<EcgRecord> records;  // at target_fs
  FeatureDataset features;
  BuildStats stats;
};

inline DatasetBundle prepare_bundle(std::string id, const std::vector<EcgRecord>& raw,
                                    const PreprocessConfig& pre, const DetectorConfig& det) {
  DatasetBundle b;
  b.id = std::move(id);
  b.records.reserve(raw.size());
  for (const EcgRecord& r : raw) b.records.push_back(resample(r, pre.target_fs));
  b.features = build_dataset(b.records, pre, det, &b.stats);
  return b;
}

inline std::vector<double> restrict_row(const std::array<double, kNumFeatures>& row,
                                        const std::vector<std::string>& names) {
  std::vector<double> out;
  out.reserve(names.size());
  for (const std::string& n : names) out.push_back(row[feature_index(n)]);
  return out;
}

inline std::vector<std::vector<double>> restrict_rows(const FeatureDataset& ds,
                                                      const std::vector<std::string>& names) {
  std::vector<std::vector<double>> rows;
  rows.reserve(ds.size());
  for (const auto& r : ds.rows) rows.push_back(restrict_row(r, names));
  return rows;
}

// Stratified fold assignment: indices of each class are shuffled and dealt
// round-robin, so folds are disjoint, cover the dataset, and match the class
// ratio within one sample. With by_record, whole records are dealt instead
// (leakage-aware splitting, stricter than window-level assignment).
inline std::vector<int> stratified_folds(const FeatureDataset& ds, int folds, std::uint64_t seed,
                                         bool by_record = false) {
  if (folds < 2) throw ConfigError("cross-validation needs >= 2 folds");
  Rng rng(seed);
  std::vector<int> assignment(ds.size(), -1);
  if (!by_record) {
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == cls) idx.push_back(i);
      }
      rng.shuffle(idx);
      for (std::size_t i = 0; i < idx.size(); ++i) assignment[idx[i]] = static_cast<int>(i % folds);
    }
  } else {
    std::vector<std::string> recs;
    for (const auto& s : ds.source) {
      if (std::find(recs.begin(), recs.end(), s) == recs.end()) recs.push_back(s);
    }
    rng.shuffle(recs);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < recs.size(); ++i) fold_of[recs[i]] = static_cast<int>(i % folds);
    for (std::size_t i = 0; i < ds.size(); ++i) assignment[i] = fold_of[ds.source[i]];
  }
  return assignment;
}

struct ExperimentPlan {
  std::string train_id = "train";
  std::string test_id = "train";  // == train_id -> cross-validated run
  std::vector<FeatureSubset> subsets;
  int cv_folds = 5;
  bool split_by_record = false;
  PreprocessConfig pre;
  DetectorConfig det;
  TrainConfig train_cfg;
  std::size_t profile_window_cap = 200;  // windows used for stage timing
  int predict_reps = 32;
  std::uint64_t seed = 0;

  bool is_cross() const { return train_id != test_id; }

  void validate() const {
    if (subsets.empty()) throw ConfigError("plan: no feature subsets");
    if (!is_cross() && cv_folds < 2) throw ConfigError("plan: cv_folds must be >= 2");
    pre.validate();
    det.validate();
    train_cfg.validate();
  }
};

// Per-window medians of each pipeline stage; fractions are shares of the
// median sum, so they add to one by construction.
struct StageBreakdown {
  double filter_ms = 0, scale_ms = 0, rpeak_ms = 0, features_ms = 0, predict_ms = 0;

  double total_ms() const { return filter_ms + scale_ms + rpeak_ms + features_ms + predict_ms; }
  std::array<std::pair<const char*, double>, 5> fractions() const {
    const double t = total_ms();
    return {{{"filter", filter_ms / t},
             {"scale", scale_ms / t},
             {"rpeak", rpeak_ms / t},
             {"features", features_ms / t},
             {"predict", predict_ms / t}}};
  }
};

struct ProfileReport {
  StageBreakdown stages;          // medians per stage
  double pipeline_ms_median = 0;  // median of per-window stage sums
  std::size_t windows_profiled = 0;
  std::size_t windows_skipped = 0;
};

// Deployment-order timing over raw (unfiltered, unscaled) windows: low-pass,
// scale, R-peak detection, feature extraction, prediction. Windows that fail
// peak detection are skipped and counted, like everywhere else.
inline ProfileReport profile_pipeline(const std::vector<EcgRecord>& records_at_rate,
                                      const PreprocessConfig& pre, const DetectorConfig& det,
                                      const BonsaiModel& model, std::size_t max_windows = 200) {
  using clock = std::chrono::steady_clock;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  const std::size_t wlen = pre.window_samples();
  const std::size_t stride = pre.stride_samples();
  const auto sos = butterworth_lowpass_sos(pre.filter_order, pre.cutoff_hz, pre.target_fs);

  std::vector<double> t_filter, t_scale, t_rpeak, t_features, t_predict, t_total;
  std::size_t skipped = 0;

  for (const EcgRecord& rec : records_at_rate) {
    if (rec.fs != pre.target_fs)
      throw ValidationError("profile: record " + rec.record_id + " not at target rate");
    for (std::size_t off = 0; off + wlen <= rec.samples.size(); off += stride) {
      if (t_total.size() >= max_windows) break;
      const std::span<const double> raw(rec.samples.data() + off, wlen);

      auto t0 = clock::now();
      const std::vector<double> filtered = filtfilt(sos, raw);
      const double ms_filter = ms_since(t0);

      t0 = clock::now();
      const std::vector<double> scaled = minmax_scale(filtered);
      const double ms_scale = ms_since(t0);

      t0 = clock::now();
      const RPeakList peaks = detect_rpeaks(scaled, pre.target_fs, det);
      const double ms_rpeak = ms_since(t0);

      if (peaks.indices.size() < 2) {
        ++skipped;
        continue;
      }
      t0 = clock::now();
      const FeatureVector fv = extract_features(to_nn_series(peaks));
      const double ms_features = ms_since(t0);

      const std::vector<double> x = restrict_row(fv.values(), model.feature_names);
      t0 = clock::now();
      volatile double sink = predict(model, x).score;
      (void)sink;
      const double ms_predict = ms_since(t0);

      t_filter.push_back(ms_filter);
      t_scale.push_back(ms_scale);
      t_rpeak.push_back(ms_rpeak);
      t_features.push_back(ms_features);
      t_predict.push_back(ms_predict);
      t_total.push_back(ms_filter + ms_scale + ms_rpeak + ms_features + ms_predict);
    }
    if (t_total.size() >= max_windows) break;
  }
  if (t_total.empty()) throw ValidationError("profile: no usable windows");

  ProfileReport rep;
  rep.stages.filter_ms = median(t_filter);
  rep.stages.scale_ms = median(t_scale);
  rep.stages.rpeak_ms = median(t_rpeak);
  rep.stages.features_ms = median(t_features);
  rep.stages.predict_ms = median(t_predict);
  rep.pipeline_ms_median = median(t_total);
  rep.windows_profiled = t_total.size();
  rep.windows_skipped = skipped;
  return rep;
}

struct InferenceTiming {
  TimingStats predict;            // classifier alone
  double pipeline_ms_median = 0;  // full window pipeline
  StageBreakdown stages;
};

// Classifier-alone and full-pipeline timing for one model over a bundle.
inline InferenceTiming measure_inference(const DatasetBundle& bundle, const BonsaiModel& model,
                                         const PreprocessConfig& pre, const DetectorConfig& det,
                                         std::size_t max_windows = 200, int reps = 32) {
  if (bundle.features.size() == 0) throw ValidationError("measure_inference: empty window set");
  InferenceTiming t;
  t.predict = time_predict(model, restrict_rows(bundle.features, model.feature_names), reps);
  const ProfileReport prof = profile_pipeline(bundle.records, pre, det, model, max_windows);
  t.pipeline_ms_median = prof.pipeline_ms_median;
  t.stages = prof.stages;
  return t;
}

struct CvSummary {
  std::vector<MetricsBlock> folds;
  double mean_accuracy = 0;
};

struct SubsetResult {
  std::string tag;
  std::vector<std::string> features;
  MetricsBlock pooled;  // pooled predictions (all folds, or the cross-dataset eval)
  CvSummary cv;         // empty folds vector for cross-dataset runs
  std::size_t model_size_bytes = 0;
  InferenceTiming timing;
  std::vector<std::uint8_t> model_bytes;  // model trained on the full training set
};

struct RunReport {
  std::string train_id, test_id;
  int cv_folds = 0;  // 0 for cross-dataset
  std::uint64_t seed = 0;
  BuildStats train_stats, test_stats;
  std::vector<SubsetResult> subsets;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::size_t subset, std::size_t fold) {
  std::uint64_t h = base ^ 0x9e3779b97f4a7c15ull;
  h = (h ^ (subset + 1)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (fold + 1)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace detail

// Runs one experiment plan. train == test runs stratified k-fold CV and
// reports both per-fold and pooled metrics; otherwise the model is trained on
// all of one bundle and evaluated on all of the other. Model size and timing
// always come from the model trained on the full training set, round-tripped
// through its serialized form so the reported numbers describe the artifact
// that would ship.
inline RunReport run_plan(const ExperimentPlan& plan, const DatasetBundle& train,
                          const DatasetBundle& test) {
  plan.validate();
  if (train.features.size() == 0) throw ValidationError("run_plan: empty training dataset");
  if (test.features.size() == 0) throw ValidationError("run_plan: empty test dataset");

  RunReport report;
  report.train_id = plan.train_id;
  report.test_id = plan.test_id;
  report.cv_folds = plan.is_cross() ? 0 : plan.cv_folds;
  report.seed = plan.seed;
  report.train_stats = train.stats;
  report.test_stats = test.stats;

  for (std::size_t si = 0; si < plan.subsets.size(); ++si) {
    const FeatureSubset& subset = plan.subsets[si];
    SubsetResult res;
    res.tag = subset.origin.empty() ? "subset_" + std::to_string(subset.size()) : subset.origin;
    res.features = subset.features;

    const auto train_rows = restrict_rows(train.features, subset.features);

    TrainConfig cfg = plan.train_cfg;
    if (!plan.is_cross()) {
      const std::vector<int> folds =
          stratified_folds(train.features, plan.cv_folds, plan.seed, plan.split_by_record);
      std::vector<int> pooled_pred(train.features.size(), 0);
      for (int f = 0; f < plan.cv_folds; ++f) {
        std::vector<std::vector<double>> fit_x;
        std::vector<int> fit_y;
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          if (folds[i] != f) {
            fit_x.push_back(train_rows[i]);
            fit_y.push_back(train.features.labels[i]);
          }
        }
        cfg.seed = detail::derive_seed(plan.seed, si, static_cast<std::size_t>(f) + 1);
        const BonsaiModel fold_model = afpipe::train(fit_x, fit_y, subset.features, cfg);

        std::vector<int> fold_pred, fold_truth;
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          if (folds[i] == f) {
            const int p = predict(fold_model, train_rows[i]).label == Rhythm::Af ? 1 : 0;
            pooled_pred[i] = p;
            fold_pred.push_back(p);
            fold_truth.push_back(train.features.labels[i]);
          }
        }
        res.cv.folds.push_back(compute_metrics(fold_pred, fold_truth));
      }
      res.pooled = compute_metrics(pooled_pred, train.features.labels);
      double acc = 0;
      for (const MetricsBlock& m : res.cv.folds) acc += m.accuracy;
      res.cv.mean_accuracy = acc / res.cv.folds.size();
    }

    // Full-train model: the shippable artifact this row describes.
    cfg.seed = detail::derive_seed(plan.seed, si, 0);
    const BonsaiModel full = afpipe::train(train_rows, train.features.labels, subset.features, cfg);
    res.model_bytes = serialize(full);
    res.model_size_bytes = res.model_bytes.size();
    const BonsaiModel deployed = deserialize(res.model_bytes);

    if (plan.is_cross()) {
      const auto test_rows = restrict_rows(test.features, subset.features);
      std::vector<int> pred;
      pred.reserve(test_rows.size());
      for (const auto& row : test_rows)
        pred.push_back(predict(deployed, row).label == Rhythm::Af ? 1 : 0);
      res.pooled = compute_metrics(pred, test.features.labels);
      res.cv.mean_accuracy = res.pooled.accuracy;
    }

    res.timing = measure_inference(test, deployed, plan.pre, plan.det, plan.profile_window_cap,
                                   plan.predict_reps);
    report.subsets.push_back(std::move(res));
  }
  return report;
}

}  // namespace afpipe
