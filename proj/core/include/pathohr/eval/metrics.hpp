#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathohr/model/config.hpp"

namespace pathohr {

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Labels are 0/1. Throws UndefinedMetric
/// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassificationMetrics {
  double acc = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Positive-class (label 1) metrics; any 0/0 ratio is reported as 0.
ClassificationMetrics classification_metrics(std::span<const int> predictions, std::span<const int> labels);
/// Unweighted mean of the per-class metrics of classes 0 and 1.
ClassificationMetrics macro_classification_metrics(std::span<const int> predictions, std::span<const int> labels);

struct MetricsReport {
  std::string method;
  bool residual = false;
  double auc = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
  double macro_precision = 0.0;
  /// Mean over evaluated slides of merged / unmerged attention MACs.
  double attention_mac_ratio = 1.0;
  double mean_tokens_before_merge = 0.0;
  double mean_tokens_after_merge = 0.0;
  std::size_t test_slides = 0;
  std::vector<std::uint64_t> seeds;
  /// Empty on success; the error message of a failed cell otherwise.
  std::string failure;
  ModelConfig config;

  bool failed() const { return !failure.empty(); }
  friend bool operator==(const MetricsReport& a, const MetricsReport& b);
};

/// Row label used in tables: the similarity method, or "none" when the
/// model does not merge.
std::string method_label(const ModelConfig& cfg);

std::string report_to_json(const MetricsReport& report, int indent = 2);
MetricsReport report_from_json(std::string_view text);
std::string reports_to_json(const std::vector<MetricsReport>& reports, int indent = 2);
std::vector<MetricsReport> reports_from_json(std::string_view text);

inline constexpr std::string_view kMetricsCsvHeader = "method,residual,auc,acc,f1,recall,precision,mac_ratio";
/// Header plus one line per report. Failed cells print "nan" metrics.
std::string reports_to_csv(const std::vector<MetricsReport>& reports);

}  // namespace pathohr
