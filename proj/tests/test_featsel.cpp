#include <catch2/catch_amalgamated.hpp>

#include "afpipe/featsel.hpp"
#include "oracles.hpp"

using namespace afpipe;

namespace {

// Dataset with given per-column generators.
FeatureDataset random_dataset(Rng& rng, std::size_t n) {
  FeatureDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.uniform() < 0.5);
    std::array<double, kNumFeatures> row{};
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      row[j] = rng.normal(label * rng.uniform(), 1.0 + 0.1 * j);
    }
    ds.rows.push_back(row);
    ds.labels.push_back(label);
    ds.source.push_back("r");
  }
  return ds;
}

}  // namespace

TEST_CASE("hand-computed ANOVA case is exact") {
  const std::vector<double> values = {1, 2, 3, 2, 3, 4};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  CHECK(anova_f(values, labels) == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("identical class distributions score zero") {
  const std::vector<double> values = {1, 2, 3, 1, 2, 3};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  CHECK(anova_f(values, labels) == 0.0);
}

TEST_CASE("zero within-class variance with distinct means is +infinity") {
  const std::vector<double> values = {5, 5, 9, 9};
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(std::isinf(anova_f(values, labels)));

  // ...and with equal means it is zero, not NaN.
  const std::vector<double> flat = {7, 7, 7, 7};
  CHECK(anova_f(flat, labels) == 0.0);
}

TEST_CASE("a class with fewer than two samples is an error") {
  const std::vector<double> values = {5, 9, 9};
  const std::vector<int> labels = {0, 1, 1};
  CHECK_THROWS_AS(anova_f(values, labels), InsufficientDataError);
}

TEST_CASE("F is invariant under affine maps of the values") {
  Rng rng(3);
  std::vector<double> values(60);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < values.size(); ++i) {
    labels[i] = static_cast<int>(i % 2);
    values[i] = rng.normal(labels[i] * 0.8, 1.0);
  }
  const double base = anova_f(values, labels);
  for (const auto [a, b] : {std::pair{-2.7, 11.0}, std::pair{0.001, -4.0}, std::pair{1.0, 1e6}}) {
    std::vector<double> mapped(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mapped[i] = a * values[i] + b;
    CHECK(anova_f(mapped, labels) == Catch::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("anova_f agrees with the textbook oracle on random groups") {
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> values;
    std::vector<int> labels;
    std::vector<double> g0, g1;
    const std::size_t n0 = 2 + rng.index(30), n1 = 2 + rng.index(30);
    for (std::size_t i = 0; i < n0; ++i) {
      g0.push_back(rng.normal(0.0, 2.0));
      values.push_back(g0.back());
      labels.push_back(0);
    }
    for (std::size_t i = 0; i < n1; ++i) {
      g1.push_back(rng.normal(0.7, 2.0));
      values.push_back(g1.back());
      labels.push_back(1);
    }
    CHECK(anova_f(values, labels) ==
          Catch::Approx(oracles::anova_oracle(g0, g1)).epsilon(1e-10));
  }
}

TEST_CASE("a single separating feature ranks first") {
  Rng rng(5);
  FeatureDataset ds = random_dataset(rng, 200);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) ds.rows[i][j] = rng.normal();
    ds.rows[i][feature_index("cvnni")] = ds.labels[i] * 10.0 + rng.normal(0.0, 0.01);
  }
  CHECK(rank_features(ds).entries.front().first == "cvnni");
}

TEST_CASE("ranking equals a brute-force sort of per-column F values") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const FeatureDataset ds = random_dataset(rng, 40 + rng.index(100));
    const FeatureRanking ranking = rank_features(ds);

    std::vector<std::pair<double, std::size_t>> brute;
    for (std::size_t j = 0; j < kNumFeatures; ++j) brute.emplace_back(anova_f(ds.column(j), ds.labels), j);
    std::stable_sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    REQUIRE(ranking.entries.size() == kNumFeatures);
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      CHECK(ranking.entries[i].first == kFeatureNames[brute[i].second]);
      CHECK(ranking.entries[i].second == brute[i].first);
    }
  }
}

TEST_CASE("swapping two columns swaps their ranking entries") {
  Rng rng(6);
  FeatureDataset ds = random_dataset(rng, 150);
  FeatureDataset swapped = ds;
  for (std::size_t i = 0; i < ds.size(); ++i)
    std::swap(swapped.rows[i][0], swapped.rows[i][5]);

  const FeatureRanking a = rank_features(ds);
  const FeatureRanking b = rank_features(swapped);
  const auto find_f = [](const FeatureRanking& r, const std::string& name) {
    for (const auto& [n, f] : r.entries) {
      if (n == name) return f;
    }
    throw std::logic_error("missing");
  };
  CHECK(find_f(a, kFeatureNames[0]) == find_f(b, kFeatureNames[5]));
  CHECK(find_f(a, kFeatureNames[5]) == find_f(b, kFeatureNames[0]));
}

TEST_CASE("ranking ties break by canonical column order") {
  FeatureDataset ds;
  for (int i = 0; i < 8; ++i) {
    std::array<double, kNumFeatures> row{};
    const int label = i % 2;
    for (std::size_t j = 0; j < kNumFeatures; ++j) row[j] = label;  // all columns identical
    ds.rows.push_back(row);
    ds.labels.push_back(label);
    ds.source.push_back("r");
  }
  const FeatureRanking r = rank_features(ds);
  for (std::size_t j = 0; j < kNumFeatures; ++j) CHECK(r.entries[j].first == kFeatureNames[j]);
}

TEST_CASE("top-n subsets nest and cover") {
  Rng rng(7);
  const FeatureRanking r = rank_features(random_dataset(rng, 120));
  CHECK(top_n(r, 14).size() == kNumFeatures);
  for (int n = 1; n < 14; ++n) {
    const FeatureSubset small = top_n(r, n);
    const FeatureSubset big = top_n(r, n + 1);
    for (const std::string& f : small.features) CHECK(big.contains(f));
  }
  CHECK_THROWS_AS(top_n(r, 0), ValidationError);
  CHECK_THROWS_AS(top_n(r, 15), ValidationError);
}

TEST_CASE("subset algebra: idempotence and inclusion-exclusion") {
  Rng rng(12);
  const FeatureRanking r = rank_features(random_dataset(rng, 120));
  for (int rep = 0; rep < 30; ++rep) {
    const FeatureSubset a = top_n(r, 1 + static_cast<int>(rng.index(14)));
    const FeatureSubset b = top_n(r, 1 + static_cast<int>(rng.index(14)));
    CHECK(subset_union(a, a).features == a.features);
    CHECK(subset_intersect(a, a).features == a.features);
    const std::size_t u = subset_union(a, b).size();
    std::size_t i = 0;
    for (const std::string& f : a.features) i += b.contains(f);
    CHECK(u + i == a.size() + b.size());
  }
}

TEST_CASE("subset members stay in canonical order") {
  FeatureSubset s = detail::canonicalize({"cvnni", "rmssd", "mean_hr"}, "manual");
  CHECK(s.features == std::vector<std::string>{"rmssd", "mean_hr", "cvnni"});
  CHECK_THROWS_AS(detail::canonicalize({"nope"}, "manual"), ValidationError);
}
