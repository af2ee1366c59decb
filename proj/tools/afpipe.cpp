// afpipe: end-to-end AF detection pipeline tooling.
//
// Subcommands:
//   synth    generate synthetic ECG records with ground-truth R-peaks
//   prepare  records -> feature CSV
//   rank     feature CSV -> ANOVA F-value ranking CSV
//   train    feature CSV -> serialized model
//   eval     model + feature CSV -> metrics JSON
//   sweep    feature-subset sweep with CV or cross-dataset evaluation
//   profile  per-stage latency breakdown of the window pipeline

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "afpipe/dataset.hpp"
#include "afpipe/harness.hpp"
#include "afpipe/report.hpp"

namespace fs = std::filesystem;
using namespace afpipe;

namespace {

std::vector<fs::path> collect_record_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> paths;
  for (const std::string& in : inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".csv") paths.push_back(e.path());
      }
    } else {
      paths.push_back(p);
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ConfigError("no record CSV files found");
  return paths;
}

std::vector<EcgRecord> load_records(const std::vector<std::string>& inputs) {
  std::vector<EcgRecord> records;
  for (const fs::path& p : collect_record_paths(inputs)) records.push_back(load_csv(p));
  return records;
}

std::vector<FeatureSubset> sweep_subsets(const FeatureRanking& ranking,
                                         const std::vector<int>& sizes) {
  std::vector<FeatureSubset> subsets;
  for (int n : sizes) subsets.push_back(top_n(ranking, n));
  return subsets;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AF detection pipeline: windowed ECG -> HRV features -> shallow sparse tree"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "global RNG seed");

  PipelineConfig cfg;

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic ECG records");
  std::string synth_out = ".";
  std::string synth_label = "NON_AF", synth_prefix = "rec";
  int synth_count = 1;
  SynthesisSpec spec;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--records", synth_count, "number of records")->check(CLI::PositiveNumber);
  synth->add_option("--duration", spec.duration_s, "record duration, seconds");
  synth->add_option("--fs", spec.fs, "sampling frequency, Hz");
  synth->add_option("--rr-mean", spec.rr_mean_ms, "mean RR interval, ms");
  synth->add_option("--rr-jitter", spec.rr_jitter_ms, "uniform RR jitter half-width, ms");
  synth->add_option("--qrs-width", spec.qrs_width_ms, "QRS Gaussian sigma, ms");
  synth->add_option("--noise-std", spec.noise_std, "additive noise std, mV");
  synth->add_option("--wander-hz", spec.baseline_wander_hz, "baseline wander frequency");
  synth->add_option("--wander-amp", spec.baseline_wander_amp, "baseline wander amplitude, mV");
  synth->add_option("--label", synth_label, "rhythm label, AF or NON_AF");
  synth->add_option("--prefix", synth_prefix, "record id prefix");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "records -> feature CSV");
  std::vector<std::string> prepare_in;
  std::string prepare_out = "features.csv";
  prepare->add_option("--records", prepare_in, "record CSVs or directories")->required();
  prepare->add_option("--out", prepare_out, "output feature CSV");

  // rank
  auto* rank = app.add_subcommand("rank", "ANOVA F-value ranking");
  std::string rank_in, rank_out = "ranking.csv";
  rank->add_option("--features", rank_in, "feature CSV")->required()->check(CLI::ExistingFile);
  rank->add_option("--out", rank_out, "output ranking CSV");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a feature CSV");
  std::string train_in, train_model_out = "model.bnsi", train_subset, train_ranking;
  int train_top_n = 0;
  train_cmd->add_option("--features", train_in, "feature CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model", train_model_out, "output model file");
  train_cmd->add_option("--subset", train_subset, "comma-separated feature names");
  train_cmd->add_option("--top-n", train_top_n, "train on the top-n ranked features");
  train_cmd->add_option("--ranking", train_ranking, "ranking CSV for --top-n");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a feature CSV");
  std::string eval_model, eval_in, eval_out;
  eval_cmd->add_option("--model", eval_model, "model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--features", eval_in, "feature CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "metrics JSON (stdout if omitted)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "feature-subset sweep with CV or cross-dataset eval");
  std::vector<std::string> sweep_train_in, sweep_test_in;
  std::string sweep_out = ".";
  std::string sweep_sizes = "4,6,8,10,12,14";
  int sweep_folds = 5;
  bool sweep_by_record = false;
  sweep->add_option("--train-records", sweep_train_in, "training record CSVs or directories")
      ->required();
  sweep->add_option("--test-records", sweep_test_in,
                    "test record CSVs or directories (omit for cross-validation)");
  sweep->add_option("--subset-sizes", sweep_sizes, "comma-separated subset sizes");
  sweep->add_option("--folds", sweep_folds, "CV folds when no test set is given");
  sweep->add_flag("--split-by-record", sweep_by_record, "assign CV folds by record, not window");
  sweep->add_option("--out", sweep_out, "output directory");

  // profile
  auto* profile = app.add_subcommand("profile", "per-stage latency breakdown");
  std::vector<std::string> profile_in;
  std::string profile_model, profile_out = ".";
  std::size_t profile_cap = 500;
  profile->add_option("--records", profile_in, "record CSVs or directories")->required();
  profile->add_option("--model", profile_model, "model file")->required()->check(CLI::ExistingFile);
  profile->add_option("--out", profile_out, "output directory");
  profile->add_option("--max-windows", profile_cap, "windows to profile");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) apply_config(cfg, parse_config_file(config_path));

    if (*synth) {
      fs::create_directories(synth_out);
      spec.label = rhythm_from_string(synth_label);
      for (int i = 0; i < synth_count; ++i) {
        SynthesisSpec s = spec;
        s.seed = seed + static_cast<std::uint64_t>(i);
        s.record_id = synth_prefix + "-" + std::to_string(i);
        const EcgRecord rec = synthesize(s);
        save_csv(rec, fs::path(synth_out) / (s.record_id + ".csv"));
      }
      std::cout << "wrote " << synth_count << " record(s) to " << synth_out << "\n";
    } else if (*prepare) {
      BuildStats stats;
      const FeatureDataset ds = build_dataset(load_records(prepare_in), cfg.pre, cfg.det, &stats);
      save_features_csv(ds, prepare_out);
      std::cout << "windows=" << stats.windows_total << " skipped=" << stats.windows_skipped
                << " rows=" << ds.size() << " -> " << prepare_out << "\n";
    } else if (*rank) {
      const FeatureRanking ranking = rank_features(load_features_csv(rank_in));
      save_ranking_csv(ranking, rank_out);
      std::cout << "ranking -> " << rank_out << "\n";
    } else if (*train_cmd) {
      const FeatureDataset ds = load_features_csv(train_in);
      std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
      if (!train_subset.empty()) {
        names.clear();
        std::stringstream ss(train_subset);
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
        names = detail::canonicalize(std::move(names), "cli").features;
      } else if (train_top_n > 0) {
        const FeatureRanking ranking = train_ranking.empty()
                                           ? rank_features(ds)
                                           : load_ranking_csv(train_ranking);
        names = top_n(ranking, train_top_n).features;
      }
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const BonsaiModel model = afpipe::train(restrict_rows(ds, names), ds.labels, names, tc);
      const std::vector<std::uint8_t> bytes = serialize(model);
      std::ofstream out(train_model_out, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      std::cout << "model (" << bytes.size() << " bytes, " << names.size() << " features) -> "
                << train_model_out << "\n";
    } else if (*eval_cmd) {
      std::ifstream in(eval_model, std::ios::binary);
      const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                            std::istreambuf_iterator<char>());
      const BonsaiModel model = deserialize(bytes);
      const FeatureDataset ds = load_features_csv(eval_in);
      std::vector<int> pred;
      for (const auto& row : ds.rows)
        pred.push_back(predict(model, restrict_row(row, model.feature_names)).label == Rhythm::Af);
      const ordered_json j = detail::metrics_json(compute_metrics(pred, ds.labels));
      if (eval_out.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::ofstream out(eval_out, std::ios::binary);
        out << j.dump(2) << "\n";
        std::cout << "metrics -> " << eval_out << "\n";
      }
    } else if (*sweep) {
      fs::create_directories(sweep_out);
      const bool cross = !sweep_test_in.empty();
      const DatasetBundle train_b =
          prepare_bundle(cross ? "A" : "train", load_records(sweep_train_in), cfg.pre, cfg.det);
      const DatasetBundle test_b =
          cross ? prepare_bundle("B", load_records(sweep_test_in), cfg.pre, cfg.det) : train_b;

      const FeatureRanking ranking = rank_features(train_b.features);
      std::vector<int> sizes;
      {
        std::stringstream ss(sweep_sizes);
        std::string tok;
        while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
      }

      ExperimentPlan plan;
      plan.train_id = train_b.id;
      plan.test_id = cross ? test_b.id : train_b.id;
      plan.subsets = sweep_subsets(ranking, sizes);
      plan.cv_folds = sweep_folds;
      plan.split_by_record = sweep_by_record;
      plan.pre = cfg.pre;
      plan.det = cfg.det;
      plan.train_cfg = cfg.train;
      plan.seed = seed;

      const RunReport report = run_plan(plan, train_b, test_b);
      write_report_json(report, fs::path(sweep_out) / "report.json");
      write_report_csv(report, fs::path(sweep_out) / "report.csv");
      save_ranking_csv(ranking, fs::path(sweep_out) / "ranking.csv");
      for (const SubsetResult& s : report.subsets) {
        std::ofstream out(fs::path(sweep_out) / ("model_" + s.tag + ".bnsi"), std::ios::binary);
        out.write(reinterpret_cast<const char*>(s.model_bytes.data()),
                  static_cast<std::streamsize>(s.model_bytes.size()));
      }
      std::cout << "sweep (" << report.subsets.size() << " subsets) -> " << sweep_out << "\n";
    } else if (*profile) {
      std::ifstream in(profile_model, std::ios::binary);
      const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                            std::istreambuf_iterator<char>());
      const BonsaiModel model = deserialize(bytes);
      std::vector<EcgRecord> records;
      for (EcgRecord& r : load_records(profile_in))
        records.push_back(resample(r, cfg.pre.target_fs));
      const ProfileReport rep = profile_pipeline(records, cfg.pre, cfg.det, model, profile_cap);
      fs::create_directories(profile_out);
      std::ofstream out(fs::path(profile_out) / "profile.json", std::ios::binary);
      out << profile_json(rep).dump(2) << "\n";
      write_profile_csv(rep, fs::path(profile_out) / "profile.csv");
      std::cout << "profile (" << rep.windows_profiled << " windows) -> " << profile_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
