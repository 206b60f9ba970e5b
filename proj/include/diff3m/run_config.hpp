#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "diff3m/detection.hpp"
#include "diff3m/training.hpp"

namespace diff3m {

/// Flat key=value run configuration. Blank lines and lines starting with '#'
/// are ignored; unknown or repeated keys are rejected with ConfigError.
struct RunConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  Index image_size = 32;
  Index d_embed = 64;
  double lambda = 0.5;
  double lr = 1e-4;
  std::size_t batch_size = 8;
  std::size_t iters = 2000;
  std::uint64_t seed = 0;
  int ddim_stride = 1;
  int t_prime = 400;
  ScoreKind score_kind = ScoreKind::mse;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;

  /// Training settings; the variant and phase come from the command line.
  TrainConfig train_config(Variant variant = Variant::full, Phase phase = Phase::joint) const;
  DetectOptions detect_options() const { return {t_prime, ddim_stride}; }
};

}  // namespace diff3m
