#include "pathohr/eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "pathohr/error.hpp"

namespace pathohr {

using Json = nlohmann::ordered_json;

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " values vs " + std::to_string(b) + " labels");
  }
}

void check_binary(std::span<const int> v, const char* what) {
  for (int x : v)
    if (x != 0 && x != 1) throw ConfigError(std::string(what) + " must be 0 or 1, got " + std::to_string(x));
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

ClassificationMetrics class_metrics(std::span<const int> pred, std::span<const int> labels, int positive) {
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == positive;
    const bool l = labels[i] == positive;
    tp += p && l;
    fp += p && !l;
    fn += !p && l;
    correct += pred[i] == labels[i];
  }
  ClassificationMetrics m;
  m.acc = correct / static_cast<double>(pred.size());
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "roc_auc");
  check_binary(labels, "roc_auc labels");
  // Rank-sum form of the pair count: sort once, give tied groups their
  // average rank, then AUC = (R_pos - P(P+1)/2) / (P N). Ranks are doubled
  // to keep every quantity an exact integer.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_rank = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        ++positives;
        twice_rank_sum += twice_rank;
      } else {
        ++negatives;
      }
    }
    i = j;
  }
  if (positives == 0 || negatives == 0) throw UndefinedMetric("roc_auc needs both positive and negative labels");
  const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

ClassificationMetrics classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size(), "classification_metrics");
  if (predictions.empty()) throw EmptyInputError("classification_metrics of empty input");
  check_binary(predictions, "predictions");
  check_binary(labels, "labels");
  return class_metrics(predictions, labels, 1);
}

ClassificationMetrics macro_classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
  const ClassificationMetrics pos = classification_metrics(predictions, labels);
  const ClassificationMetrics neg = class_metrics(predictions, labels, 0);
  ClassificationMetrics m;
  m.acc = pos.acc;
  m.precision = 0.5 * (pos.precision + neg.precision);
  m.recall = 0.5 * (pos.recall + neg.recall);
  m.f1 = 0.5 * (pos.f1 + neg.f1);
  return m;
}

std::string method_label(const ModelConfig& cfg) {
  if (cfg.model == ModelKind::tangle || !cfg.merge_enabled) return "none";
  return std::string(to_string(cfg.method));
}

bool operator==(const MetricsReport& a, const MetricsReport& b) { return report_to_json(a) == report_to_json(b); }

namespace {

Json report_json(const MetricsReport& r) {
  Json j;
  j["method"] = r.method;
  j["residual"] = r.residual;
  j["status"] = r.failed() ? "failed" : "ok";
  j["auc"] = r.auc;
  j["acc"] = r.acc;
  j["f1"] = r.f1;
  j["recall"] = r.recall;
  j["precision"] = r.precision;
  j["macro_f1"] = r.macro_f1;
  j["macro_recall"] = r.macro_recall;
  j["macro_precision"] = r.macro_precision;
  j["attention_mac_ratio"] = r.attention_mac_ratio;
  j["mean_tokens_before_merge"] = r.mean_tokens_before_merge;
  j["mean_tokens_after_merge"] = r.mean_tokens_after_merge;
  j["test_slides"] = r.test_slides;
  j["seeds"] = r.seeds;
  j["failure"] = r.failure;
  j["config"] = Json::parse(r.config.to_json());
  return j;
}

MetricsReport report_from(const Json& j) {
  try {
    MetricsReport r;
    r.method = j.at("method").get<std::string>();
    r.residual = j.at("residual").get<bool>();
    r.auc = j.at("auc").get<double>();
    r.acc = j.at("acc").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.recall = j.at("recall").get<double>();
    r.precision = j.at("precision").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.attention_mac_ratio = j.at("attention_mac_ratio").get<double>();
    r.mean_tokens_before_merge = j.at("mean_tokens_before_merge").get<double>();
    r.mean_tokens_after_merge = j.at("mean_tokens_after_merge").get<double>();
    r.test_slides = j.at("test_slides").get<std::size_t>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.failure = j.at("failure").get<std::string>();
    r.config = ModelConfig::from_json(j.at("config").dump());
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
}

Json parse(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("invalid metrics JSON: ") + e.what());
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_to_json(const MetricsReport& report, int indent) { return report_json(report).dump(indent); }

MetricsReport report_from_json(std::string_view text) { return report_from(parse(text)); }

std::string reports_to_json(const std::vector<MetricsReport>& reports, int indent) {
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(indent);
}

std::vector<MetricsReport> reports_from_json(std::string_view text) {
  const Json arr = parse(text);
  if (!arr.is_array()) throw FormatError("metrics JSON must be an array");
  std::vector<MetricsReport> out;
  for (const auto& j : arr) out.push_back(report_from(j));
  return out;
}

std::string reports_to_csv(const std::vector<MetricsReport>& reports) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& r : reports) {
    out += r.method + ',' + (r.residual ? "on" : "off");
    for (double v : {r.auc, r.acc, r.f1, r.recall, r.precision}) out += ',' + (r.failed() ? std::string("nan") : fmt(v));
    out += ',' + fmt(r.attention_mac_ratio) + '\n';
  }
  return out;
}

}  // namespace pathohr
