#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "afpipe/harness.hpp"

namespace afpipe {

using ordered_json = nlohmann::ordered_json;

// Undefined metrics serialize as JSON null, never as 0.
namespace detail {

inline ordered_json metric_or_null(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

inline ordered_json metrics_json(const MetricsBlock& m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["confusion"] = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
  for (const auto& [key, cls] : {std::pair{"non_af", &m.non_af}, std::pair{"af", &m.af}}) {
    j[key] = {{"precision", metric_or_null(cls->precision)},
              {"recall", metric_or_null(cls->recall)},
              {"f1", metric_or_null(cls->f1)}};
  }
  return j;
}

inline ordered_json timing_json(const InferenceTiming& t) {
  ordered_json stages;
  ordered_json fractions;
  stages["filter_ms"] = t.stages.filter_ms;
  stages["scale_ms"] = t.stages.scale_ms;
  stages["rpeak_ms"] = t.stages.rpeak_ms;
  stages["features_ms"] = t.stages.features_ms;
  stages["predict_ms"] = t.stages.predict_ms;
  for (const auto& [name, frac] : t.stages.fractions()) fractions[name] = frac;
  return ordered_json{{"predict_ms_median", t.predict.median_ms},
                      {"predict_ms_p95", t.predict.p95_ms},
                      {"pipeline_ms_median", t.pipeline_ms_median},
                      {"stage_ms", stages},
                      {"stage_fractions", fractions}};
}

}  // namespace detail

// Schema documented in docs/reproduce.md. Every field except the "timing"
// subobjects is deterministic for a fixed seed.
inline ordered_json report_json(const RunReport& r) {
  ordered_json j;
  j["train"] = r.train_id;
  j["test"] = r.test_id;
  j["cv_folds"] = r.cv_folds;
  j["seed"] = r.seed;
  j["train_windows"] = {{"total", r.train_stats.windows_total},
                        {"skipped", r.train_stats.windows_skipped}};
  j["test_windows"] = {{"total", r.test_stats.windows_total},
                       {"skipped", r.test_stats.windows_skipped}};
  j["subsets"] = ordered_json::array();
  for (const SubsetResult& s : r.subsets) {
    ordered_json row;
    row["tag"] = s.tag;
    row["features"] = s.features;
    row["model_size_bytes"] = s.model_size_bytes;
    row["pooled"] = detail::metrics_json(s.pooled);
    if (!s.cv.folds.empty()) {
      row["cv"] = ordered_json::object();
      row["cv"]["mean_accuracy"] = s.cv.mean_accuracy;
      row["cv"]["folds"] = ordered_json::array();
      for (const MetricsBlock& f : s.cv.folds) row["cv"]["folds"].push_back(detail::metrics_json(f));
    }
    row["timing"] = detail::timing_json(s.timing);
    j["subsets"].push_back(std::move(row));
  }
  return j;
}

inline void write_report_json(const RunReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << report_json(r).dump(2) << "\n";
}

// Replaces every timing subobject with null; used to compare reports across
// runs where only wall-clock measurements may differ.
inline ordered_json mask_timing(ordered_json j) {
  if (j.contains("subsets")) {
    for (auto& row : j["subsets"]) row["timing"] = nullptr;
  }
  return j;
}

// CSV with one row per subset, percentage metrics and kB sizes. Undefined
// metrics become empty cells.
inline void write_report_csv(const RunReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "data,subset,n_features,accuracy_pct,precision_non_af_pct,precision_af_pct,"
         "recall_non_af_pct,recall_af_pct,f1_non_af_pct,f1_af_pct,"
         "model_size_kb,bonsai_inference_ms,pipeline_inference_ms\n";
  char buf[64];
  const auto pct = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return buf;
  };
  const std::string data_tag = "T_" + r.train_id + "_" + r.test_id;
  for (const SubsetResult& s : r.subsets) {
    out << data_tag << ',' << s.tag << ',' << s.features.size() << ',';
    out << pct(s.pooled.accuracy) << ',' << pct(s.pooled.non_af.precision) << ','
        << pct(s.pooled.af.precision) << ',' << pct(s.pooled.non_af.recall) << ','
        << pct(s.pooled.af.recall) << ',' << pct(s.pooled.non_af.f1) << ','
        << pct(s.pooled.af.f1) << ',';
    std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(s.model_size_bytes) / 1024.0);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.4f", s.timing.predict.median_ms);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.4f", s.timing.pipeline_ms_median);
    out << buf << "\n";
  }
}

inline ordered_json profile_json(const ProfileReport& p) {
  ordered_json stages, fractions;
  stages["filter_ms"] = p.stages.filter_ms;
  stages["scale_ms"] = p.stages.scale_ms;
  stages["rpeak_ms"] = p.stages.rpeak_ms;
  stages["features_ms"] = p.stages.features_ms;
  stages["predict_ms"] = p.stages.predict_ms;
  for (const auto& [name, frac] : p.stages.fractions()) fractions[name] = frac;
  return ordered_json{{"windows_profiled", p.windows_profiled},
                      {"windows_skipped", p.windows_skipped},
                      {"pipeline_ms_median", p.pipeline_ms_median},
                      {"stage_ms", stages},
                      {"stage_fractions", fractions}};
}

inline void write_profile_csv(const ProfileReport& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "stage,median_ms,fraction\n";
  const auto fr = p.stages.fractions();
  const double ms[5] = {p.stages.filter_ms, p.stages.scale_ms, p.stages.rpeak_ms,
                        p.stages.features_ms, p.stages.predict_ms};
  char buf[96];
  for (std::size_t i = 0; i < fr.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.4f\n", fr[i].first, ms[i], fr[i].second);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// key=value config files. '#' starts a comment; unknown keys are rejected so
// typos fail loudly.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

struct PipelineConfig {
  PreprocessConfig pre;
  DetectorConfig det;
  TrainConfig train;
};

inline void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    const double d = std::strtod(value.c_str(), nullptr);
    const int i = static_cast<int>(d);
    if (key == "target_fs") cfg.pre.target_fs = i;
    else if (key == "cutoff_hz") cfg.pre.cutoff_hz = d;
    else if (key == "filter_order") cfg.pre.filter_order = i;
    else if (key == "window_s") cfg.pre.window_s = d;
    else if (key == "overlap_s") cfg.pre.overlap_s = d;
    else if (key == "label_threshold_p") cfg.pre.label_threshold_p = d;
    else if (key == "swt_level") cfg.det.swt_level = i;
    else if (key == "refractory_ms") cfg.det.refractory_ms = d;
    else if (key == "threshold_quantile") cfg.det.threshold_quantile = d;
    else if (key == "snap_ms") cfg.det.snap_ms = d;
    else if (key == "depth") cfg.train.depth = i;
    else if (key == "d_proj") cfg.train.d_proj = i;
    else if (key == "budget_z") cfg.train.budget_z = d;
    else if (key == "budget_w") cfg.train.budget_w = d;
    else if (key == "budget_v") cfg.train.budget_v = d;
    else if (key == "budget_theta") cfg.train.budget_theta = d;
    else if (key == "sigma") cfg.train.sigma = d;
    else if (key == "learning_rate") cfg.train.learning_rate = d;
    else if (key == "momentum") cfg.train.momentum = d;
    else if (key == "epochs") cfg.train.epochs = i;
    else if (key == "batch_size") cfg.train.batch_size = i;
    else if (key == "warmup_epochs") cfg.train.warmup_epochs = i;
    else if (key == "reg_z") cfg.train.reg_z = d;
    else if (key == "reg_w") cfg.train.reg_w = d;
    else if (key == "reg_v") cfg.train.reg_v = d;
    else if (key == "reg_theta") cfg.train.reg_theta = d;
    else if (key == "anneal_start") cfg.train.anneal_start = d;
    else if (key == "anneal_end") cfg.train.anneal_end = d;
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace afpipe
