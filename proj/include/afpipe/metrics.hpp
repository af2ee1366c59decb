#pragma once

#include <optional>
#include <span>

#include "afpipe/common.hpp"

namespace afpipe {

// Per-class scores. A metric is nullopt ("undefined") when its denominator is
// empty: precision with no predictions for the class, recall with no labels
// of the class. Undefined never silently becomes 0.
struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct MetricsBlock {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;  // with AF as the positive class
  double accuracy = 0.0;
  ClassMetrics non_af;  // class 0
  ClassMetrics af;      // class 1
};

namespace detail {
inline ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision && m.recall) {
    const double p = *m.precision, r = *m.recall;
    m.f1 = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return m;
}
}  // namespace detail

inline MetricsBlock compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ValidationError("compute_metrics: predictions and labels differ in length");
  if (predictions.empty()) throw ValidationError("compute_metrics: empty input");

  MetricsBlock m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_af = predictions[i] != 0;
    const bool is_af = labels[i] != 0;
    if (pred_af && is_af) ++m.tp;
    else if (pred_af && !is_af) ++m.fp;
    else if (!pred_af && !is_af) ++m.tn;
    else ++m.fn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(predictions.size());
  m.af = detail::class_metrics(m.tp, m.fp, m.fn);
  m.non_af = detail::class_metrics(m.tn, m.fn, m.fp);
  return m;
}

}  // namespace afpipe
