#include "diff3m/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace diff3m {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels, const char* op) {
  if (scores.size() != labels.size()) {
    throw DataError(std::string(op) + ": " + std::to_string(scores.size()) + " scores but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError(std::string(op) + ": labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError(std::string(op) + ": non-finite score");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels, "auroc");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auroc: needs both normal and anomalous labels");

  // Walk tie groups in descending order. Each group contributes
  // 2*pos_g*neg_below + pos_g*neg_g in half-credits; all integer arithmetic.
  const auto order = descending(scores);
  std::uint64_t half_credits = 0;
  std::uint64_t neg_seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pg = 0, ng = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pg : ng) += 1;
      ++j;
    }
    const std::uint64_t neg_below = neg - neg_seen - ng;
    half_credits += 2 * pg * neg_below + pg * ng;
    neg_seen += ng;
    i = j;
  }
  return static_cast<double>(half_credits) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels, "auprc");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw DataError("auprc: needs at least one anomalous label");

  const auto order = descending(scores);
  double area = 0.0;
  std::size_t tp = 0, seen = 0, prev_tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen = j;
    if (tp != prev_tp) {
      area += static_cast<double>(tp - prev_tp) / static_cast<double>(pos) *
              (static_cast<double>(tp) / static_cast<double>(seen));
    }
    prev_tp = tp;
    i = j;
  }
  return area;
}

MetricReport metric_report(std::span<const double> scores, std::span<const int> labels,
                           ScoreKind kind) {
  MetricReport r;
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  r.n_anomalous = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.n_normal = labels.size() - r.n_anomalous;
  r.kind = kind;
  return r;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& std) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(v.size()));
}

// Weights of feature j over the `k` samples ranked highest by `key`.
std::vector<double> top_subset(const std::vector<std::vector<double>>& weights,
                               const std::vector<std::vector<double>>& key, std::size_t j,
                               std::size_t k) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a][j] > key[b][j]; });
  std::vector<double> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(weights[order[i]][j]);
  return out;
}

}  // namespace

AttentionReport aggregate_attention(const std::vector<std::string>& names,
                                    const std::vector<std::vector<double>>& weights,
                                    const std::vector<std::vector<double>>& values) {
  if (weights.empty()) throw DataError("attention report: empty sample set");
  if (weights.size() != values.size()) throw ShapeError("attention report: weights/values count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].size() != names.size() || values[i].size() != names.size()) {
      throw ShapeError("attention report: sample " + std::to_string(i) + " has the wrong feature count");
    }
  }
  AttentionReport report;
  report.samples = weights.size();
  report.top_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(weights.size()) - 1e-12)));
  for (std::size_t j = 0; j < names.size(); ++j) {
    FeatureAttention f;
    f.name = names[j];
    std::vector<double> all;
    for (const auto& w : weights) all.push_back(w[j]);
    mean_std(all, f.mean, f.std);
    mean_std(top_subset(weights, weights, j, report.top_count), f.top_weight_mean, f.top_weight_std);
    mean_std(top_subset(weights, values, j, report.top_count), f.top_value_mean, f.top_value_std);
    report.features.push_back(std::move(f));
  }
  return report;
}

AttentionReport attention_report(const Split& split, const Model& model) {
  if (!model.uses_ieca()) {
    throw ConfigError("attention report needs a model trained with the full variant");
  }
  if (!split.schema || !(*split.schema == model.schema)) {
    throw DataError("attention report: dataset schema does not match the checkpoint schema");
  }
  std::vector<std::vector<double>> weights, values;
  constexpr std::size_t chunk = 64;
  const Index size = model.config.image_size;
  for (std::size_t start = 0; start < split.size(); start += chunk) {
    const std::size_t end = std::min(split.size(), start + chunk);
    Tensor x({static_cast<Index>(end - start), 1, size, size});
    std::vector<Tensor> normalized;
    for (std::size_t i = start; i < end; ++i) {
      if (split.images[i].shape() != Shape{size, size}) {
        throw ShapeError("attention report: image " + std::to_string(i) + " has shape " +
                         to_string(split.images[i].shape()));
      }
      x.array().segment(static_cast<Index>(i - start) * size * size, size * size) =
          to_model_domain(split.images[i]).array();
      normalized.push_back(model.normalizer.apply(split.records[i]));
    }
    Tape tape(false);
    const BatchCondition cond = condition_batch(tape, model, x, normalized);
    for (std::size_t i = start; i < end; ++i) {
      const Tensor& w = cond.weights[i - start].value();
      weights.emplace_back(w.data(), w.data() + w.size());
      values.push_back(split.records[i].values);
    }
  }
  return aggregate_attention(model.schema.names, weights, values);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_attention_report(const AttentionReport& report) {
  std::string out = "feature\tmean\tstd\ttop10_by_weight_mean\ttop10_by_weight_std\t"
                    "top10_by_value_mean\ttop10_by_value_std\n";
  for (const auto& f : report.features) {
    out += f.name + '\t' + fmt(f.mean) + '\t' + fmt(f.std) + '\t' + fmt(f.top_weight_mean) + '\t' +
           fmt(f.top_weight_std) + '\t' + fmt(f.top_value_mean) + '\t' + fmt(f.top_value_std) + '\n';
  }
  return out;
}

std::string format_metric_reports(const MetricReport& mse, const MetricReport& maxabs) {
  return "n_normal\tn_anomalous\tauroc_mse\tauroc_maxabs\tauprc_mse\tauprc_maxabs\n" +
         std::to_string(mse.n_normal) + '\t' + std::to_string(mse.n_anomalous) + '\t' +
         fmt(mse.auroc) + '\t' + fmt(maxabs.auroc) + '\t' + fmt(mse.auprc) + '\t' +
         fmt(maxabs.auprc) + '\n';
}

}  // namespace diff3m
