#pragma once

#include <span>
#include <string>
#include <vector>

#include "diff3m/detection.hpp"
#include "diff3m/synthdata.hpp"

namespace diff3m {

/// Mann-Whitney AUROC with ties credited 1/2. Throws DataError unless both
/// classes are present or when sizes differ.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Step-wise average precision: sum over distinct thresholds (descending) of
/// (recall_k - recall_{k-1}) * precision_k. Throws DataError without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct MetricReport {
  double auroc = 0.0;
  double auprc = 0.0;
  std::size_t n_normal = 0;
  std::size_t n_anomalous = 0;
  ScoreKind kind = ScoreKind::mse;
};

MetricReport metric_report(std::span<const double> scores, std::span<const int> labels,
                           ScoreKind kind);

struct FeatureAttention {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  // top 10% of samples ranked by this feature's own weight
  double top_weight_mean = 0.0;
  double top_weight_std = 0.0;
  // top 10% of samples ranked by this feature's raw value
  double top_value_mean = 0.0;
  double top_value_std = 0.0;
};

struct AttentionReport {
  std::size_t samples = 0;
  std::size_t top_count = 0;
  std::vector<FeatureAttention> features;
};

/// Aggregates per-sample weight vectors. weights[i] and values[i] have one entry
/// per feature. Std is the population form. The top subset holds
/// max(1, ceil(0.1 n)) samples; ties in the ranking keep the earlier sample.
AttentionReport aggregate_attention(const std::vector<std::string>& names,
                                    const std::vector<std::vector<double>>& weights,
                                    const std::vector<std::vector<double>>& values);

/// Runs IECA on every sample of `split` with the model's tokenizer and encoder.
/// Throws DataError on a schema mismatch and ConfigError for models without IECA.
AttentionReport attention_report(const Split& split, const Model& model);

/// TSV with a header row.
std::string format_attention_report(const AttentionReport& report);
/// Two-row TSV (header + values) with MSE and max_abs columns side by side.
std::string format_metric_reports(const MetricReport& mse, const MetricReport& maxabs);

}  // namespace diff3m
