#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "afpipe/dataset.hpp"
#include "afpipe/hrv.hpp"

namespace afpipe {

// One-way ANOVA F-statistic for a binary split:
//   F = (SS_between / 1) / (SS_within / (N - 2)).
// Zero within-class variance with distinct means returns +infinity, which
// sorts a perfectly separating feature above every finite score.
inline double anova_f(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size())
    throw ValidationError("anova_f: values and labels differ in length");
  double sum[2] = {0, 0};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int c = labels[i] ? 1 : 0;
    sum[c] += values[i];
    ++count[c];
  }
  if (count[0] < 2 || count[1] < 2)
    throw InsufficientDataError("anova_f: each class needs >= 2 samples (got " +
                                std::to_string(count[0]) + " and " + std::to_string(count[1]) + ")");

  const double m0 = sum[0] / count[0], m1 = sum[1] / count[1];
  const double grand = (sum[0] + sum[1]) / static_cast<double>(values.size());
  double ss_within = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double m = labels[i] ? m1 : m0;
    ss_within += (values[i] - m) * (values[i] - m);
  }
  const double ss_between =
      count[0] * (m0 - grand) * (m0 - grand) + count[1] * (m1 - grand) * (m1 - grand);
  if (ss_within == 0.0) {
    return ss_between == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  const double df_within = static_cast<double>(values.size()) - 2.0;
  return ss_between / (ss_within / df_within);
}

// Features in descending F-value order; ties break by canonical column order.
struct FeatureRanking {
  std::vector<std::pair<std::string, double>> entries;
};

inline FeatureRanking rank_features(const FeatureDataset& ds) {
  std::vector<std::size_t> order(kNumFeatures);
  std::vector<double> f(kNumFeatures);
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    order[j] = j;
    f[j] = anova_f(ds.column(j), ds.labels);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
  FeatureRanking r;
  for (std::size_t j : order) r.entries.emplace_back(kFeatureNames[j], f[j]);
  return r;
}

// A named subset of the canonical features. Members are kept in canonical
// column order so set operations and model layouts are reproducible.
struct FeatureSubset {
  std::vector<std::string> features;
  std::string origin;

  bool contains(const std::string& name) const {
    return std::find(features.begin(), features.end(), name) != features.end();
  }
  std::size_t size() const { return features.size(); }
};

namespace detail {
inline FeatureSubset canonicalize(std::vector<std::string> names, std::string origin) {
  for (const std::string& n : names) feature_index(n);  // rejects unknown names
  std::sort(names.begin(), names.end(),
            [](const std::string& a, const std::string& b) {
              return feature_index(a) < feature_index(b);
            });
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (names.empty()) throw ValidationError("feature subset must be non-empty");
  return FeatureSubset{std::move(names), std::move(origin)};
}
}  // namespace detail

inline FeatureSubset top_n(const FeatureRanking& ranking, int n, const std::string& origin = "") {
  if (n < 1 || static_cast<std::size_t>(n) > ranking.entries.size())
    throw ValidationError("subset size " + std::to_string(n) + " out of range [1, " +
                          std::to_string(ranking.entries.size()) + "]");
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(ranking.entries[i].first);
  return detail::canonicalize(std::move(names),
                              origin.empty() ? "top_" + std::to_string(n) : origin);
}

inline FeatureSubset subset_union(const FeatureSubset& a, const FeatureSubset& b) {
  std::vector<std::string> names = a.features;
  names.insert(names.end(), b.features.begin(), b.features.end());
  return detail::canonicalize(std::move(names), a.origin + " | " + b.origin);
}

inline FeatureSubset subset_intersect(const FeatureSubset& a, const FeatureSubset& b) {
  std::vector<std::string> names;
  for (const std::string& name : a.features) {
    if (b.contains(name)) names.push_back(name);
  }
  return detail::canonicalize(std::move(names), a.origin + " & " + b.origin);
}

// Ranking CSV: `feature,f_value`, descending.
inline void save_ranking_csv(const FeatureRanking& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "feature,f_value\n";
  char buf[64];
  for (const auto& [name, f] : r.entries) {
    std::snprintf(buf, sizeof(buf), "%.9g", f);
    out << name << ',' << buf << "\n";
  }
}

inline FeatureRanking load_ranking_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  FeatureRanking r;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'feature,f_value'");
    const std::string name = line.substr(0, comma);
    feature_index(name);  // validates the name
    r.entries.emplace_back(name, std::strtod(line.c_str() + comma + 1, nullptr));
  }
  return r;
}

}  // namespace afpipe
