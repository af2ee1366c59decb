#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "afpipe/ecg.hpp"
#include "afpipe/hrv.hpp"
#include "afpipe/preprocess.hpp"
#include "afpipe/rpeak.hpp"

namespace afpipe {

// Rows of the 14 canonical features plus a binary label (0 = non-AF, 1 = AF)
// and the id of the record each window came from.
struct FeatureDataset {
  std::vector<std::array<double, kNumFeatures>> rows;
  std::vector<int> labels;
  std::vector<std::string> source;

  std::size_t size() const { return rows.size(); }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> col(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][j];
    return col;
  }

  void append(const FeatureVector& f, Rhythm label, std::string record_id) {
    rows.push_back(f.values());
    labels.push_back(label == Rhythm::Af ? 1 : 0);
    source.push_back(std::move(record_id));
  }
};

struct BuildStats {
  std::size_t windows_total = 0;
  std::size_t windows_skipped = 0;  // detector produced < 2 peaks
};

// records -> resample -> low-pass -> window/label -> R-peaks -> features.
// Windows where fewer than two peaks are found carry no interval information
// and are skipped; the skip count is reported, never silently dropped.
inline FeatureDataset build_dataset(const std::vector<EcgRecord>& records,
                                    const PreprocessConfig& pre, const DetectorConfig& det,
                                    BuildStats* stats = nullptr) {
  pre.validate();
  det.validate();
  FeatureDataset ds;
  BuildStats local;
  for (const EcgRecord& raw : records) {
    const EcgRecord at_rate = resample(raw, pre.target_fs);
    const EcgRecord filtered = butterworth_lowpass(at_rate, pre.cutoff_hz, pre.filter_order);
    for (const EcgWindow& w : window_and_label(filtered, pre)) {
      ++local.windows_total;
      const RPeakList peaks = detect_rpeaks(w, pre.target_fs, det);
      if (peaks.indices.size() < 2) {
        ++local.windows_skipped;
        continue;
      }
      ds.append(extract_features(to_nn_series(peaks)), w.label, w.source_record);
    }
  }
  if (stats) *stats = local;
  return ds;
}

// Feature CSV: canonical 14-column header, then `label` and `record`. Values
// are %.9g so written files reload to the same doubles in practice.
inline void save_features_csv(const FeatureDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  for (std::size_t j = 0; j < kNumFeatures; ++j) out << (j ? "," : "") << kFeatureNames[j];
  out << ",label,record\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", ds.rows[i][j]);
      out << (j ? "," : "") << buf;
    }
    out << ',' << (ds.labels[i] ? "AF" : "NON_AF") << ',' << ds.source[i] << "\n";
  }
  if (!out) throw Error(path.string() + ": write failed");
}

inline FeatureDataset load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < kNumFeatures + 1)
    throw ParseError(path.string() + ":1: header must list the 14 features and a label column");
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (header[j] != kFeatureNames[j])
      throw ParseError(path.string() + ":1: column " + std::to_string(j + 1) + " is '" +
                       header[j] + "', expected '" + kFeatureNames[j] + "'");
  }
  if (header[kNumFeatures] != "label")
    throw ParseError(path.string() + ":1: column 15 must be 'label'");
  const bool has_record = header.size() > kNumFeatures + 1 && header[kNumFeatures + 1] == "record";

  FeatureDataset ds;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);

    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cells.push_back(tok);
    if (cells.size() < kNumFeatures + 1) throw ParseError(where + ": too few columns");

    std::array<double, kNumFeatures> row{};
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      char* end = nullptr;
      row[j] = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || *end != '\0')
        throw ParseError(where + ": bad value '" + cells[j] + "' in column " + std::to_string(j + 1));
    }
    Rhythm label;
    try {
      label = rhythm_from_string(cells[kNumFeatures]);
    } catch (const std::invalid_argument&) {
      throw ParseError(where + ": bad label '" + cells[kNumFeatures] + "'");
    }
    ds.rows.push_back(row);
    ds.labels.push_back(label == Rhythm::Af ? 1 : 0);
    ds.source.push_back(has_record && cells.size() > kNumFeatures + 1 ? cells[kNumFeatures + 1]
                                                                      : std::string{});
  }
  return ds;
}

}  // namespace afpipe
