#pragma once

#include <string>
#include <vector>

#include "diff3m/networks.hpp"
#include "diff3m/schedule.hpp"

namespace diff3m {

enum class ScoreKind { mse, maxabs };

std::string to_string(ScoreKind kind);
/// Throws ConfigError for anything other than "mse" / "maxabs".
ScoreKind parse_score_kind(const std::string& text);

struct AnomalyResult {
  Tensor x0_hat;       // reconstruction, [H,W]
  Tensor anomaly_map;  // |x - x0_hat|
  double score_mse = 0.0;
  double score_maxabs = 0.0;
  int t_prime = 0;

  double score(ScoreKind kind) const { return kind == ScoreKind::mse ? score_mse : score_maxabs; }
};

/// Elementwise |x - x0_hat|.
Tensor anomaly_map(const Tensor& x, const Tensor& x0_hat);
/// Mean squared difference or maximum absolute per-pixel difference.
double anomaly_score(const Tensor& x, const Tensor& x0_hat, ScoreKind kind);
double anomaly_score(const Tensor& x, const Tensor& x0_hat, const std::string& kind);

struct DetectOptions {
  int t_prime = 400;
  /// Spacing of the DDIM subsequence used for both loops.
  int stride = 1;
};

/// Deterministic reconstruction-based detection:
///   1. c_r from the clean input (once, before any loop);
///   2. DDIM encode 0 -> t_prime with NP noise estimates;
///   3. DDIM decode t_prime -> 0, where each step builds x~_t from the two
///      checkerboard-masked MPG reconstructions (the ddpm variant uses x_t itself);
///   4. residual scores against the input.
/// images are [H,W] in [0,1]. Samples are processed together but independently.
std::vector<AnomalyResult> detect_batch(const std::vector<Tensor>& images,
                                        const std::vector<PatientRecord>& records,
                                        const Model& model, const NoiseSchedule& sched,
                                        const DetectOptions& options);

AnomalyResult detect(const Tensor& image, const PatientRecord& record, const Model& model,
                     const NoiseSchedule& sched, const DetectOptions& options);

}  // namespace diff3m
